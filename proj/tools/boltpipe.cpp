// boltpipe command line front end.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <deque>
#include <iostream>

#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/config.hpp"
#include "boltpipe/geomfeat.hpp"
#include "boltpipe/log.hpp"
#include "boltpipe/parallel.hpp"
#include "boltpipe/pipeline.hpp"
#include "boltpipe/ply.hpp"

using namespace boltpipe;

namespace {

// A flag that maps onto a `[section] key` config entry. Flags are applied on
// top of the config file, so they win.
struct Binding {
    CLI::Option* option = nullptr;
    std::string section;
    std::string key;
    std::string value;
    bool is_flag = false;
};

class Command {
public:
    Command(CLI::App& parent, const std::string& name, const std::string& help) : app_(parent.add_subcommand(name, help)) {
        app_->add_option("--config", config_path_, "configuration file")->check(CLI::ExistingFile);
    }

    CLI::App* app() { return app_; }

    void bind(const std::string& flag, const std::string& section, const std::string& key, const std::string& help) {
        auto& b = bindings_.emplace_back();
        b.section = section;
        b.key = key;
        b.option = app_->add_option(flag, b.value, help);
    }
    void bind_flag(const std::string& flag, const std::string& section, const std::string& key,
                   const std::string& help) {
        auto& b = bindings_.emplace_back();
        b.section = section;
        b.key = key;
        b.is_flag = true;
        b.option = app_->add_flag(flag, help);
    }

    ConfigFile config() const {
        ConfigFile cfg = config_path_.empty() ? ConfigFile::parse("", "<flags>") : ConfigFile::load(config_path_);
        for (const auto& b : bindings_) {
            if (b.option->count() == 0) continue;
            cfg.set(b.section, b.key, b.is_flag ? "true" : b.value);
        }
        return cfg;
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::deque<Binding> bindings_;
};

// --------------------------------------------------------------- reporting

void print_report(const std::string& title, const Report& r) {
    std::printf("%s\n", title.c_str());
    std::size_t width = 0;
    for (const auto& [k, v] : r.entries()) width = std::max(width, k.size());
    for (const auto& [k, v] : r.entries()) std::printf("  %-*s  %s\n", static_cast<int>(width), k.c_str(), v.c_str());
}

void finish(const std::string& title, const std::string& out, Report& r, const Timings& timings) {
    add_timings(r, timings);
    print_report(title, r);
    if (!timings.empty()) std::printf("\n%s", timing_table(timings).c_str());
    r.write(report_path(out));
}

void print_filter_summary(const Report& r) {
    auto get = [&](const char* key) {
        const std::string* v = r.find(key);
        return v ? *v : std::string("n/a");
    };
    std::printf("%-12s %-12s %-22s %-22s\n", "points in", "points out", "background removed %", "bolt points kept %");
    std::printf("%-12s %-12s %-22s %-22s\n\n", get("points_in").c_str(), get("points_out").c_str(),
                get("background_removed_pct").c_str(), get("bolt_points_preserved_pct").c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"boltpipe: rock bolt detection in tunnel point clouds"};
    app.require_subcommand(1);
    int threads = 0;
    bool quiet = false;
    app.add_option("--threads", threads, "cap on worker threads (1 = fully deterministic)")->check(CLI::NonNegativeNumber);
    app.add_flag("--quiet", quiet, "suppress progress output");

    // ------------------------------------------------------------- synth
    Command synth(app, "synth", "generate a labeled synthetic tunnel scan");
    std::string synth_out;
    bool synth_ascii = false;
    synth.app()->add_option("--out", synth_out, "output PLY")->required();
    synth.app()->add_flag("--ascii", synth_ascii, "write ASCII PLY");
    synth.bind("--length", "synth", "length", "tunnel length (m)");
    synth.bind("--radius", "synth", "radius", "tunnel radius (m)");
    synth.bind("--spacing", "synth", "spacing", "surface point spacing (m)");
    synth.bind("--bolts", "synth", "bolts", "number of bolts");
    synth.bind("--bolt-radius", "synth", "bolt_radius", "bolt radius (m)");
    synth.bind("--protrusion-min", "synth", "protrusion_min", "shortest bolt protrusion (m)");
    synth.bind("--protrusion-max", "synth", "protrusion_max", "longest bolt protrusion (m)");
    synth.bind("--bolt-spacing", "synth", "bolt_spacing", "bolt surface point spacing (m)");
    synth.bind("--max-tilt", "synth", "max_tilt", "bolt tilt limit (degrees)");
    synth.bind("--min-separation", "synth", "min_separation", "minimum bolt separation (m)");
    synth.bind("--min-height", "synth", "min_height", "lowest bolt height above the floor (m)");
    synth.bind("--noise", "synth", "noise", "range noise sigma (m)");
    synth.bind("--roughness", "synth", "roughness", "wall roughness amplitude (m)");
    synth.bind("--clutter", "synth", "clutter", "attached non-bolt structures");
    synth.bind("--debris", "synth", "debris", "floating debris blobs");
    synth.bind("--outlier-fraction", "synth", "outlier_fraction", "fraction of uniform outliers");
    synth.bind("--seed", "synth", "seed", "random seed");

    // -------------------------------------------------------- preprocess
    Command pre(app, "preprocess", "k-NN outlier removal, floor removal, connected component filtering");
    std::string pre_in, pre_out;
    pre.app()->add_option("--in", pre_in, "input PLY")->required()->check(CLI::ExistingFile);
    pre.app()->add_option("--out", pre_out, "output PLY")->required();
    pre.bind("--knn-k", "preprocess", "knn_k", "neighbors for the outlier filter");
    pre.bind("--knn-sigma", "preprocess", "knn_sigma", "threshold in standard deviations");
    pre.bind("--csf-grid", "preprocess", "csf_grid", "cloth grid resolution (m)");
    pre.bind("--csf-iters", "preprocess", "csf_iterations", "cloth iterations");
    pre.bind("--csf-thresh", "preprocess", "csf_threshold", "ground distance threshold (m)");
    pre.bind("--csf-rigidness", "preprocess", "csf_rigidness", "cloth rigidness (1..3)");
    pre.bind("--cc-voxel", "preprocess", "cc_voxel", "component voxel size (m)");
    pre.bind("--cc-min", "preprocess", "cc_min_points", "smallest kept component");
    pre.bind_flag("--keep-floor", "preprocess", "keep_floor", "skip cloth simulation");

    // ---------------------------------------------------------- features
    Command feat(app, "features", "attach eigenvalue features as channels");
    std::string feat_in, feat_out;
    feat.app()->add_option("--in", feat_in, "input PLY")->required()->check(CLI::ExistingFile);
    feat.app()->add_option("--out", feat_out, "output PLY")->required();

    // ------------------------------------------------------------ filter
    Command filt(app, "filter", "geometry-sensitive curvature filter");
    std::string filt_in, filt_out;
    filt.app()->add_option("--in", filt_in, "input PLY")->required()->check(CLI::ExistingFile);
    filt.app()->add_option("--out", filt_out, "output PLY")->required();
    filt.bind("--percentile", "filter", "percentile", "curvature percentile threshold");
    filt.bind("--eps", "filter", "eps", "DBSCAN radius (m)");
    filt.bind("--min-pts", "filter", "min_pts", "DBSCAN core threshold");
    filt.bind("--gth", "filter", "g_th", "cluster size below which ROI refinement applies");
    filt.bind("--roi", "filter", "roi_radius", "ROI radius (m)");

    // ------------------------------------------------------------- train
    Command tr(app, "train", "train the segmentation network");
    std::vector<std::string> train_in;
    std::string train_model;
    bool train_cv = false;
    tr.app()->add_option("--in", train_in, "labeled training PLY (repeatable)")->required()->check(CLI::ExistingFile);
    tr.app()->add_option("--model", train_model, "output model file")->required();
    tr.app()->add_flag("--cv", train_cv, "hold out every fold once and report each validation loss");
    tr.bind("--epochs", "train", "epochs", "epochs");
    tr.bind("--lr", "train", "lr", "initial learning rate");
    tr.bind("--batch", "train", "batch", "tiles per batch");
    tr.bind("--tile", "train", "tile", "points per tile");
    tr.bind("--seed", "train", "seed", "random seed");
    tr.bind("--folds", "train", "folds", "tile folds; one is held out for validation");
    tr.bind("--w-pos", "train", "w_pos", "bolt class weight");
    tr.bind("--w-neg", "train", "w_neg", "background class weight");
    tr.bind("--lr-decay", "train", "lr_decay", "learning rate decay factor");
    tr.bind("--lr-decay-every", "train", "lr_decay_every", "epochs between decays");
    tr.bind("--k", "train", "k", "graph neighbors");
    tr.bind("--widths", "train", "widths", "EdgeConv widths, comma separated");
    tr.bind("--agg", "train", "agg", "aggregation width");
    tr.bind("--head", "train", "head", "head widths, comma separated");
    tr.bind("--tnet-edge", "train", "tnet_edge", "T-net edge widths");
    tr.bind("--tnet-point", "train", "tnet_point", "T-net point width");
    tr.bind("--tnet-fc", "train", "tnet_fc", "T-net fully connected widths");
    tr.bind_flag("--parallel", "train", "parallel", "process the tiles of a batch concurrently");
    tr.bind_flag("--verbose", "train", "verbose", "print per-epoch losses");

    // ----------------------------------------------------------- predict
    Command pr(app, "predict", "label a filtered cloud with a trained model");
    std::string pred_in, pred_model, pred_out;
    pr.app()->add_option("--in", pred_in, "input PLY")->required()->check(CLI::ExistingFile);
    pr.app()->add_option("--model", pred_model, "model file")->required()->check(CLI::ExistingFile);
    pr.app()->add_option("--out", pred_out, "output PLY")->required();
    pr.bind("--tile", "predict", "tile", "points per tile");
    pr.bind("--seed", "predict", "seed", "tiling seed");

    // -------------------------------------------------------------- eval
    Command ev(app, "eval", "point IoU and instance precision/recall/F1");
    std::string ev_pred, ev_gt, ev_out;
    ev.app()->add_option("--pred", ev_pred, "predicted PLY")->required()->check(CLI::ExistingFile);
    ev.app()->add_option("--gt", ev_gt, "ground truth PLY")->required()->check(CLI::ExistingFile);
    ev.app()->add_option("--out", ev_out, "report base path (default: <pred>.eval)");
    ev.bind("--match-thresh", "eval", "match_thresh", "instance overlap threshold");
    ev.bind("--eps", "eval", "eps", "instance DBSCAN radius (m)");
    ev.bind("--min-pts", "eval", "min_pts", "instance DBSCAN core threshold");

    // -------------------------------------------------------------- maps
    Command mp(app, "maps", "bolt distance and distribution maps");
    std::string map_in, map_pred, map_out;
    mp.app()->add_option("--in", map_in, "cloud to annotate")->required()->check(CLI::ExistingFile);
    mp.app()->add_option("--pred", map_pred, "predicted PLY")->required()->check(CLI::ExistingFile);
    mp.app()->add_option("--out", map_out, "output PLY")->required();
    mp.bind("--radius", "maps", "radius", "distribution radius (m)");

    // --------------------------------------------------------------- run
    Command run(app, "run", "preprocess, filter, train or predict, eval and maps");
    run.bind("--in", "run", "input", "raw scan");
    run.bind("--workdir", "run", "workdir", "artifact directory");
    run.bind("--mode", "run", "mode", "predict or train");
    run.bind("--model", "run", "model", "model file");
    run.bind("--gt", "run", "gt", "ground truth PLY");
    run.bind_flag("--force", "run", "force", "rerun every stage");
    run.bind_flag("--cv", "run", "cv", "cross-validate when training");
    bool run_no_eval = false, run_no_maps = false;
    run.app()->add_flag("--no-eval", run_no_eval, "skip evaluation");
    run.app()->add_flag("--no-maps", run_no_maps, "skip map generation");

    CLI11_PARSE(app, argc, argv);

    set_thread_count(threads);
    log::set_quiet(quiet);

    try {
        if (synth.app()->parsed()) {
            SynthConfig cfg;
            read_config(synth.config(), cfg);
            cfg.validate();
            const auto t0 = std::chrono::steady_clock::now();
            SynthScan scan = generate_scan(cfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (synth_ascii) {
                save_ply(scan.cloud, synth_out, PlyFormat::ascii);
            } else {
                save_ply_atomic(scan.cloud, synth_out);
            }
            const ScanStats s = scan_stats(scan.cloud);
            Report r;
            r.add("points", s.points);
            r.add("bolt_points", s.bolt_points);
            r.add("background_points", s.background_points);
            r.add("planted_bolts", scan.bolts.size());
            r.add("bolt_instances", s.bolt_count);
            r.add("background_per_bolt_point", s.background_per_bolt_point);
            r.add("mean_spacing", s.mean_spacing);
            r.add("seed", static_cast<unsigned long long>(cfg.seed));
            finish("synth", synth_out, r, {{"synthesis", secs}});
        } else if (pre.app()->parsed()) {
            PreprocessConfig cfg;
            read_config(pre.config(), cfg);
            cfg.validate();
            Report r;
            Timings t;
            const PointCloud out = stage_preprocess(load_ply(pre_in), cfg, r, t);
            save_ply_atomic(out, pre_out);
            finish("preprocess", pre_out, r, t);
        } else if (feat.app()->parsed()) {
            feat.config();
            PointCloud cloud = load_ply(feat_in);
            const auto t0 = std::chrono::steady_clock::now();
            const SpatialIndex index(cloud.positions());
            const double ps = mean_point_spacing(cloud, index);
            const double radius = influence_radius(ps);
            attach_feature_channels(cloud, local_eigenvalues(cloud, index, radius));
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            save_ply_atomic(cloud, feat_out);
            Report r;
            r.add("points", cloud.size());
            r.add("point_spacing", ps);
            r.add("support_radius", radius);
            finish("features", feat_out, r, {{"eigenvalue calculations", secs}});
        } else if (filt.app()->parsed()) {
            FilterConfig cfg;
            read_config(filt.config(), cfg);
            cfg.validate();
            Report r;
            Timings t;
            const FilterResult out = stage_filter(load_ply(filt_in), cfg, r, t);
            save_ply_atomic(out.cloud, filt_out);
            print_filter_summary(r);
            finish("filter", filt_out, r, t);
        } else if (tr.app()->parsed()) {
            segnet::ArchConfig arch;
            segnet::TrainConfig cfg;
            read_config(tr.config(), arch, cfg);
            arch.validate();
            cfg.validate();
            std::vector<PointCloud> clouds;
            for (const auto& p : train_in) clouds.push_back(load_ply(p));
            Report r;
            Timings t;
            const TrainOutcome out = stage_train(clouds, arch, cfg, train_cv, r, t);
            const std::string tmp = train_model + ".tmp";
            segnet::save_model(out.model, tmp);
            std::filesystem::rename(tmp, train_model);
            finish("train", train_model, r, t);
        } else if (pr.app()->parsed()) {
            segnet::PredictConfig cfg;
            read_config(pr.config(), cfg);
            Report r;
            Timings t;
            const PointCloud out = stage_predict(segnet::load_model(pred_model), load_ply(pred_in), cfg, r, t);
            save_ply_atomic(out, pred_out);
            finish("predict", pred_out, r, t);
        } else if (ev.app()->parsed()) {
            EvalConfig cfg;
            read_config(ev.config(), cfg);
            Report r;
            Timings t;
            stage_eval(load_ply(ev_pred), load_ply(ev_gt), cfg, r, t);
            finish("eval", ev_out.empty() ? ev_pred + ".eval" : ev_out, r, t);
        } else if (mp.app()->parsed()) {
            MapsConfig cfg;
            read_config(mp.config(), cfg);
            Report r;
            Timings t;
            const PointCloud out = stage_maps(load_ply(map_in), load_ply(map_pred), cfg, r, t);
            save_ply_atomic(out, map_out);
            finish("maps", map_out, r, t);
        } else if (run.app()->parsed()) {
            PipelineConfig cfg = pipeline_config(run.config());
            if (run_no_eval) cfg.eval = false;
            if (run_no_maps) cfg.maps = false;
            const PipelineResult res = run_pipeline(cfg);
            for (const auto& s : res.skipped) std::printf("skipped %s (artifact is current)\n", s.c_str());
            for (const auto& a : res.artifacts) std::printf("wrote %s\n", a.c_str());
            std::printf("\n%s", timing_table(res.timings).c_str());
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "boltpipe: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "boltpipe: %s\n", e.what());
        return 1;
    }
    return 0;
}
