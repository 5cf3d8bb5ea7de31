#include "boltpipe/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "boltpipe/log.hpp"
#include "boltpipe/ply.hpp"

namespace boltpipe {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slug(const std::string& row) {
    std::string s;
    for (char c : row) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!s.empty() && s.back() != '_') {
            s += '_';
        }
    }
    while (!s.empty() && s.back() == '_') s.pop_back();
    return s;
}

} // namespace

std::string timing_table(const Timings& timings) {
    std::size_t width = std::string("Process").size();
    for (const auto& t : timings) width = std::max(width, t.row.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %12s\n", static_cast<int>(width), "Process", "Time (s)");
    out += buf;
    double total = 0.0;
    for (const auto& t : timings) {
        std::snprintf(buf, sizeof buf, "%-*s  %12.3f\n", static_cast<int>(width), t.row.c_str(), t.seconds);
        out += buf;
        total += t.seconds;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %12.3f\n", static_cast<int>(width), "Total", total);
    out += buf;
    return out;
}

void add_timings(Report& report, const Timings& timings) {
    double total = 0.0;
    for (const auto& t : timings) {
        report.add("time." + slug(t.row), t.seconds);
        total += t.seconds;
    }
    report.add("time.total", total);
}

void save_ply_atomic(const PointCloud& cloud, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_ply(cloud, tmp);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

// ------------------------------------------------------------------ stages

PointCloud stage_preprocess(const PointCloud& in, const PreprocessConfig& cfg, Report& report, Timings& timings) {
    PreprocessTimings t;
    PointCloud out = preprocess(in, cfg, &t);
    timings.push_back({"k-NN filtering", t.knn_seconds});
    if (!cfg.keep_floor) timings.push_back({"cloth simulation", t.csf_seconds});
    timings.push_back({"connected component filtering", t.cc_seconds});
    report.add("points_in", in.size());
    report.add("points_out", out.size());
    if (in.has_labels()) {
        report.add("bolt_points_in", in.count_label(1));
        report.add("bolt_points_out", out.count_label(1));
    }
    return out;
}

FilterResult stage_filter(const PointCloud& in, const FilterConfig& cfg, Report& report, Timings& timings) {
    FilterResult r = geometry_sensitive_filter(in, cfg);
    const FilterStats& s = r.stats;
    timings.push_back({"eigenvalue calculations", s.eigen_seconds});
    timings.push_back({"DBSCAN", s.dbscan_seconds});
    timings.push_back({"ROI cropping", s.roi_seconds});
    report.add("points_in", s.points_in);
    report.add("points_out", s.points_out);
    report.add("point_spacing", s.point_spacing);
    report.add("support_radius", s.support_radius);
    report.add("curvature_threshold", s.curvature_threshold);
    report.add("high_curvature_points", s.high_points);
    report.add("clusters", s.clusters);
    report.add("large_clusters", s.large_clusters);
    if (in.has_labels()) {
        report.add("background_removed_pct", s.background_removed_pct);
        report.add("bolt_points_preserved_pct", s.bolt_points_preserved_pct);
        const std::size_t bolt = r.cloud.count_label(1);
        if (bolt > 0) {
            report.add("background_per_bolt_point",
                       static_cast<double>(r.cloud.size() - bolt) / static_cast<double>(bolt));
        }
    }
    return r;
}

TrainOutcome stage_train(const std::vector<PointCloud>& clouds, const segnet::ArchConfig& arch,
                         const segnet::TrainConfig& train, bool cross_validate, Report& report, Timings& timings) {
    const auto t0 = std::chrono::steady_clock::now();
    if (clouds.empty()) throw ContractError("train: no input clouds");
    if (train.tile_size <= arch.k) throw ConfigError("train: tile size must exceed k");
    std::vector<segnet::SampleTile> tiles;
    for (std::size_t c = 0; c < clouds.size(); ++c) {
        if (!clouds[c].has_labels()) throw ContractError("train: input cloud carries no labels");
        auto t = segnet::make_tiles(clouds[c], {train.tile_size, 2.0, train.seed + c});
        std::move(t.begin(), t.end(), std::back_inserter(tiles));
    }
    TrainOutcome out;
    const std::size_t folds = train.folds;
    if (cross_validate && folds > 1) {
        for (std::size_t f = 1; f < folds; ++f) {
            const auto split = segnet::split_folds(tiles, folds, f, train.seed);
            segnet::SegModel m(arch, train.seed);
            const auto curve = segnet::train(m, split.train, split.validation, train);
            out.fold_val_loss.push_back(curve.val_loss.back());
        }
    }
    const auto split = segnet::split_folds(tiles, folds, 0, train.seed);
    out.model = segnet::SegModel(arch, train.seed);
    out.curve = segnet::train(out.model, split.train, split.validation, train);
    if (cross_validate && folds > 1) out.fold_val_loss.insert(out.fold_val_loss.begin(), out.curve.val_loss.back());
    timings.push_back({"semantic segmentation (training)", seconds_since(t0)});

    report.add("tiles", tiles.size());
    report.add("train_tiles", split.train.size());
    report.add("validation_tiles", split.validation.size());
    report.add("parameters", out.model.parameter_count());
    report.add("epochs", out.curve.train_loss.size());
    for (std::size_t e = 0; e < out.curve.train_loss.size(); ++e) {
        report.add("train_loss." + std::to_string(e + 1), out.curve.train_loss[e]);
        if (e < out.curve.val_loss.size()) report.add("val_loss." + std::to_string(e + 1), out.curve.val_loss[e]);
    }
    if (!out.fold_val_loss.empty()) {
        double mean = 0.0;
        for (std::size_t f = 0; f < out.fold_val_loss.size(); ++f) {
            report.add("cv.fold" + std::to_string(f) + ".val_loss", out.fold_val_loss[f]);
            mean += out.fold_val_loss[f];
        }
        report.add("cv.mean_val_loss", mean / static_cast<double>(out.fold_val_loss.size()));
    }
    return out;
}

PointCloud stage_predict(const segnet::SegModel& model, const PointCloud& in, const segnet::PredictConfig& cfg,
                         Report& report, Timings& timings) {
    const auto t0 = std::chrono::steady_clock::now();
    PointCloud out = segnet::predict(model, in, cfg);
    timings.push_back({"semantic segmentation", seconds_since(t0)});
    report.add("points", out.size());
    report.add("predicted_bolt_points", out.count_label(1));
    return out;
}

EvalReport stage_eval(const PointCloud& pred, const PointCloud& gt, const EvalConfig& cfg, Report& report,
                      Timings& timings) {
    const auto t0 = std::chrono::steady_clock::now();
    const EvalReport r = evaluate(pred, gt, cfg);
    timings.push_back({"evaluation", seconds_since(t0)});
    report.add("points", r.points);
    report.add("unmatched_pred_points", r.unmatched_pred_points);
    report.add("iou_bolt", r.iou_bolt);
    report.add("iou_background", r.iou_background);
    report.add("ground_truth", r.gt_instances);
    report.add("predicted_instances", r.pred_instances);
    report.add("tp", r.tp);
    report.add("fp", r.fp);
    report.add("fn", r.fn);
    report.add("precision", r.precision);
    report.add("recall", r.recall);
    report.add("f1", r.f1);
    return r;
}

PointCloud stage_maps(const PointCloud& cloud, const PointCloud& pred, const MapsConfig& cfg, Report& report,
                      Timings& timings) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Vec3> bolt_points;
    const auto labels = pred.labels();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (labels[i] == 1) bolt_points.push_back(pred.position(i));
    }
    const auto centroids = bolt_centroids(pred, labels);
    PointCloud out(std::vector<Vec3>(cloud.positions().begin(), cloud.positions().end()));
    const auto counts = distribution_map(out, centroids, cfg.radius);
    std::vector<double> count_channel(counts.begin(), counts.end());
    if (!bolt_points.empty()) {
        auto dist = distance_map(out, bolt_points);
        if (cfg.colors) out.set_colors(distance_colors(dist, cfg.bins));
        out.set_channel("distance", std::move(dist));
    } else {
        log::warn("maps: prediction holds no bolt points; distance map omitted");
    }
    out.set_channel("bolt_count", std::move(count_channel));
    timings.push_back({"map generation", seconds_since(t0)});
    report.add("points", out.size());
    report.add("bolt_points", bolt_points.size());
    report.add("bolts", centroids.size());
    report.add("radius", cfg.radius);
    return out;
}

// ---------------------------------------------------------------- pipeline

void PipelineConfig::validate() const {
    if (input.empty()) throw ConfigError("run: no input path given");
    if (!fs::exists(input)) throw ConfigError("run: input " + input + " does not exist");
    if (mode != "predict" && mode != "train") throw ConfigError("run: mode must be 'predict' or 'train'");
    if (mode == "predict") {
        if (model.empty()) throw ConfigError("run: predict mode needs a model path");
        if (!fs::exists(model)) throw ConfigError("run: model " + model + " does not exist");
    }
    if (!ground_truth.empty() && !fs::exists(ground_truth)) {
        throw ConfigError("run: ground truth " + ground_truth + " does not exist");
    }
    preprocess.validate();
    filter.validate();
    arch.validate();
    train.validate();
    if (predict.tile_size == 0) throw ConfigError("predict: tile size must be >= 1");
    if (!(map.radius > 0.0)) throw ConfigError("maps: radius must be > 0");
}

PipelineConfig pipeline_config(const ConfigFile& file) {
    PipelineConfig c;
    for (const auto& key : file.keys("run")) {
        const std::string& v = file.get("run", key);
        auto flag = [&](bool& out) {
            if (v == "true" || v == "1" || v == "yes" || v == "on") {
                out = true;
            } else if (v == "false" || v == "0" || v == "no" || v == "off") {
                out = false;
            } else {
                throw ConfigError(file.origin() + ": [run] " + key + " must be a boolean");
            }
        };
        if (key == "input") {
            c.input = v;
        } else if (key == "workdir") {
            c.workdir = v;
        } else if (key == "mode") {
            c.mode = v;
        } else if (key == "model") {
            c.model = v;
        } else if (key == "gt") {
            c.ground_truth = v;
        } else if (key == "eval") {
            flag(c.eval);
        } else if (key == "maps") {
            flag(c.maps);
        } else if (key == "force") {
            flag(c.force);
        } else if (key == "cv") {
            flag(c.cross_validate);
        } else if (key == "threads") {
            // consumed by the command line front end
        } else {
            throw ConfigError(file.origin() + ":" + std::to_string(file.line_of("run", key)) + ": [run] unknown key '" +
                              key + "'");
        }
    }
    read_config(file, c.preprocess);
    read_config(file, c.filter);
    read_config(file, c.arch, c.train);
    read_config(file, c.predict);
    read_config(file, c.evaluation);
    read_config(file, c.map);
    return c;
}

namespace {

bool current(const std::string& out, const std::vector<std::string>& inputs) {
    std::error_code ec;
    if (!fs::exists(out, ec)) return false;
    const auto t = fs::last_write_time(out, ec);
    if (ec) return false;
    for (const auto& in : inputs) {
        if (in.empty()) continue;
        const auto ti = fs::last_write_time(in, ec);
        if (ec || ti > t) return false;
    }
    return true;
}

template <typename Fn>
void guarded(const std::string& stage, Fn&& fn) {
    try {
        fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(cfg.workdir, ec);
    if (ec) throw IoError("cannot create " + cfg.workdir + ": " + ec.message());
    const fs::path dir(cfg.workdir);
    const std::string pre_path = (dir / "preprocessed.ply").string();
    const std::string filt_path = (dir / "filtered.ply").string();
    const std::string pred_path = (dir / "pred.ply").string();
    const std::string eval_path = (dir / "eval").string();
    const std::string maps_path = (dir / "maps.ply").string();
    const std::string model_path =
        cfg.mode == "train" ? (cfg.model.empty() ? (dir / "model.bin").string() : cfg.model) : cfg.model;

    PipelineResult res;
    auto fresh = [&](const std::string& out, const std::vector<std::string>& in) {
        return !cfg.force && current(out, in);
    };
    auto stage_report = [&](const std::string& stage, const Report& r, const std::string& artifact) {
        r.write(report_path(artifact));
        res.report.merge(r, stage + ".");
        res.artifacts.push_back(artifact);
    };

    guarded("preprocess", [&] {
        if (fresh(pre_path, {cfg.input})) {
            res.skipped.push_back("preprocess");
            return;
        }
        Report r;
        const PointCloud out = stage_preprocess(load_ply(cfg.input), cfg.preprocess, r, res.timings);
        save_ply_atomic(out, pre_path);
        stage_report("preprocess", r, pre_path);
    });
    guarded("filter", [&] {
        if (fresh(filt_path, {pre_path})) {
            res.skipped.push_back("filter");
            return;
        }
        Report r;
        const FilterResult out = stage_filter(load_ply(pre_path), cfg.filter, r, res.timings);
        save_ply_atomic(out.cloud, filt_path);
        stage_report("filter", r, filt_path);
    });

    if (cfg.mode == "train") {
        guarded("train", [&] {
            if (fresh(model_path, {filt_path})) {
                res.skipped.push_back("train");
                return;
            }
            Report r;
            const TrainOutcome out =
                stage_train({load_ply(filt_path)}, cfg.arch, cfg.train, cfg.cross_validate, r, res.timings);
            const std::string tmp = model_path + ".tmp";
            segnet::save_model(out.model, tmp);
            fs::rename(tmp, model_path);
            stage_report("train", r, model_path);
        });
    } else {
        guarded("predict", [&] {
            if (fresh(pred_path, {filt_path, cfg.model})) {
                res.skipped.push_back("predict");
                return;
            }
            Report r;
            const PointCloud out =
                stage_predict(segnet::load_model(cfg.model), load_ply(filt_path), cfg.predict, r, res.timings);
            save_ply_atomic(out, pred_path);
            stage_report("predict", r, pred_path);
        });
        if (cfg.eval) {
            guarded("eval", [&] {
                const std::string gt_path = cfg.ground_truth.empty() ? cfg.input : cfg.ground_truth;
                const PointCloud gt = load_ply(gt_path);
                if (!gt.has_labels()) {
                    log::warn("run: ground truth has no labels; evaluation skipped");
                    return;
                }
                Report r;
                stage_eval(load_ply(pred_path), gt, cfg.evaluation, r, res.timings);
                stage_report("eval", r, eval_path);
            });
        }
        if (cfg.maps) {
            guarded("maps", [&] {
                if (fresh(maps_path, {pre_path, pred_path})) {
                    res.skipped.push_back("maps");
                    return;
                }
                Report r;
                const PointCloud out = stage_maps(load_ply(pre_path), load_ply(pred_path), cfg.map, r, res.timings);
                save_ply_atomic(out, maps_path);
                stage_report("maps", r, maps_path);
            });
        }
    }

    add_timings(res.report, res.timings);
    const std::string run_report = (dir / "run").string();
    res.report.write(report_path(run_report));
    return res;
}

} // namespace boltpipe
