#include "boltpipe/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>

#include "boltpipe/log.hpp"
#include "boltpipe/segnet_layers.hpp"

namespace boltpipe::segnet {

namespace L = layers;

void ArchConfig::validate() const {
    auto positive = [](const std::vector<std::size_t>& v) {
        return std::all_of(v.begin(), v.end(), [](std::size_t w) { return w > 0; });
    };
    if (k < 1) throw ConfigError("segnet: k must be >= 1");
    if (tnet_edge.empty() || !positive(tnet_edge)) throw ConfigError("segnet: transform edge widths must be positive");
    if (tnet_point == 0 || !positive(tnet_fc)) throw ConfigError("segnet: transform widths must be positive");
    if (edge_widths.empty() || !positive(edge_widths)) throw ConfigError("segnet: need at least one EdgeConv layer");
    if (agg == 0 || !positive(head)) throw ConfigError("segnet: aggregation and head widths must be positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("segnet: leaky slope must be in [0, 1)");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("segnet: batch-norm momentum must be in (0, 1]");
    if (!(bn_eps > 0.0)) throw ConfigError("segnet: batch-norm epsilon must be > 0");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (w_pos < 0.0 || w_neg < 0.0 || std::fabs(w_pos + w_neg - 1.0) > 1e-12) {
        throw ConfigError("train: class weights must be nonnegative and sum to 1");
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0) || lr_decay_every == 0) throw ConfigError("train: bad learning-rate decay");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw ConfigError("train: bad Adam constants");
    }
}

// ------------------------------------------------------------------ layout

namespace {

struct Offsets {
    std::size_t tedge, tpoint, tfc, tout, edge, agg, head, hout;
};

Offsets offsets(const ArchConfig& a) {
    Offsets o{};
    o.tedge = 0;
    o.tpoint = o.tedge + a.tnet_edge.size();
    o.tfc = o.tpoint + 1;
    o.tout = o.tfc + a.tnet_fc.size();
    o.edge = o.tout + 1;
    o.agg = o.edge + a.edge_widths.size();
    o.head = o.agg + 1;
    o.hout = o.head + a.head.size();
    return o;
}

std::size_t concat_width(const ArchConfig& a) {
    return std::accumulate(a.edge_widths.begin(), a.edge_widths.end(), std::size_t{0});
}

} // namespace

SegModel::SegModel(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    build(seed, true);
}

void SegModel::build(std::uint64_t seed, bool init) {
    params_.clear();
    buffers_.clear();
    names_.clear();
    layers_.clear();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double slope = arch_.leaky_slope;
    std::size_t slots = 0;

    auto add = [&](const std::string& name, bool edge, std::size_t in, std::size_t out, bool bn, bool act,
                   bool zero) {
        LayerSpec s;
        s.name = name;
        s.edge = edge;
        s.in = in;
        s.out = out;
        s.bn = bn;
        s.act = act;
        const std::size_t rows = edge ? 2 * in : in;
        Mat W = Mat::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out));
        if (init && !zero) {
            const double sd = std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(rows)));
            for (Eigen::Index r = 0; r < W.rows(); ++r) {
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = sd * gauss(rng);
            }
        }
        s.w = params_.size();
        params_.push_back(std::move(W));
        names_.push_back(name + ".W");
        s.b = params_.size();
        params_.push_back(Mat::Zero(1, static_cast<Eigen::Index>(out)));
        names_.push_back(name + ".b");
        if (bn) {
            s.gamma = params_.size();
            params_.push_back(Mat::Ones(1, static_cast<Eigen::Index>(out)));
            names_.push_back(name + ".gamma");
            s.beta = params_.size();
            params_.push_back(Mat::Zero(1, static_cast<Eigen::Index>(out)));
            names_.push_back(name + ".beta");
            s.bn_slot = slots++;
            buffers_.push_back(Mat::Zero(1, static_cast<Eigen::Index>(out)));
            buffers_.push_back(Mat::Ones(1, static_cast<Eigen::Index>(out)));
        }
        layers_.push_back(std::move(s));
    };

    const ArchConfig& a = arch_;
    std::size_t d = 3;
    for (std::size_t i = 0; i < a.tnet_edge.size(); ++i) {
        add("tnet.edge" + std::to_string(i), i == 0, d, a.tnet_edge[i], true, true, false);
        d = a.tnet_edge[i];
    }
    add("tnet.point", false, d, a.tnet_point, true, true, false);
    d = a.tnet_point;
    for (std::size_t i = 0; i < a.tnet_fc.size(); ++i) {
        add("tnet.fc" + std::to_string(i), false, d, a.tnet_fc[i], false, true, false);
        d = a.tnet_fc[i];
    }
    add("tnet.out", false, d, 9, false, false, true);
    d = kFeatureDims;
    for (std::size_t i = 0; i < a.edge_widths.size(); ++i) {
        add("edge" + std::to_string(i), true, d, a.edge_widths[i], true, true, false);
        d = a.edge_widths[i];
    }
    add("agg", false, concat_width(a), a.agg, true, true, false);
    d = a.agg + concat_width(a);
    for (std::size_t i = 0; i < a.head.size(); ++i) {
        add("head" + std::to_string(i), false, d, a.head[i], true, true, false);
        d = a.head[i];
    }
    add("head.out", false, d, 1, false, false, false);
}

std::size_t SegModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
}

std::size_t SegModel::param_index(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ContractError("segnet: no parameter named " + name);
    return static_cast<std::size_t>(it - names_.begin());
}

// --------------------------------------------------------------- knn graph

KnnGraph knn_graph(const Mat& F, std::size_t k, Execution exec) {
    const auto n = static_cast<std::size_t>(F.rows());
    if (k >= n) throw ContractError("knn_graph: k must be smaller than the row count");
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.nbr.resize(n * k);
    const auto rows = static_cast<std::int64_t>(n);
    // Dimension-major copy so each distance row accumulates over contiguous memory.
    const Mat Ft = F.transpose();
    const Eigen::Index dims = F.cols();
#pragma omp parallel if (exec == Execution::parallel)
    {
        Eigen::ArrayXd d2(F.rows());
        std::vector<std::pair<double, PointId>> best;  // sorted by (distance, id)
        best.reserve(k + 1);
#pragma omp for schedule(static)
        for (std::int64_t ii = 0; ii < rows; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            d2.setZero();
            for (Eigen::Index c = 0; c < dims; ++c) {
                d2 += (Ft.row(c).transpose().array() - Ft(c, ii)).square();
            }
            // Ids arrive in ascending order, so an equal distance never displaces a kept entry.
            best.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = d2(static_cast<Eigen::Index>(j));
                if (best.size() == k && !(v < best.back().first)) continue;
                auto pos = std::upper_bound(best.begin(), best.end(), v,
                                            [](double x, const std::pair<double, PointId>& e) { return x < e.first; });
                best.insert(pos, {v, static_cast<PointId>(j)});
                if (best.size() > k) best.pop_back();
            }
            for (std::size_t t = 0; t < k; ++t) g.nbr[i * k + t] = best[t].second;
        }
    }
    return g;
}

// ------------------------------------------------------------------- tiles

std::vector<SampleTile> make_tiles(const PointCloud& cloud, const TileConfig& cfg) {
    if (cfg.tile_size == 0) throw ConfigError("tiles: tile size must be >= 1");
    if (!(cfg.block_size > 0.0)) throw ConfigError("tiles: block size must be > 0");
    if (cloud.empty()) throw DomainError("tiles: empty cloud");
    for (const char* ch : {"lambda1", "lambda2", "lambda3"}) {
        if (!cloud.has_channel(ch)) throw ContractError(std::string("tiles: cloud lacks channel ") + ch);
    }
    const auto l1 = cloud.channel("lambda1");
    const auto l2 = cloud.channel("lambda2");
    const auto l3 = cloud.channel("lambda3");
    const std::size_t ns = cfg.tile_size;
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::vector<PointId>> groups;
    if (cloud.size() < ns) {
        groups.emplace_back(cloud.size());
        std::iota(groups.back().begin(), groups.back().end(), PointId{0});
    } else {
        double x0 = cloud.position(0).x, y0 = cloud.position(0).y;
        for (const Vec3& p : cloud.positions()) {
            x0 = std::min(x0, p.x);
            y0 = std::min(y0, p.y);
        }
        std::map<std::pair<std::int64_t, std::int64_t>, std::vector<PointId>> blocks;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec3& p = cloud.position(i);
            const auto bx = static_cast<std::int64_t>(std::floor((p.x - x0) / cfg.block_size));
            const auto by = static_cast<std::int64_t>(std::floor((p.y - y0) / cfg.block_size));
            blocks[{bx, by}].push_back(static_cast<PointId>(i));
        }
        for (auto& [key, ids] : blocks) groups.push_back(std::move(ids));
    }

    std::vector<std::vector<PointId>> chosen;
    for (auto& ids : groups) {
        const std::size_t m = ids.size();
        if (m < ns) {
            std::vector<PointId> t = ids;
            std::uniform_int_distribution<std::size_t> pick(0, m - 1);
            while (t.size() < ns) t.push_back(ids[pick(rng)]);
            chosen.push_back(std::move(t));
            continue;
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t start = 0; start < m; start += ns) {
            const std::size_t end = std::min(m, start + ns);
            std::vector<PointId> t(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                   ids.begin() + static_cast<std::ptrdiff_t>(end));
            if (t.size() < ns) {
                // Fill from the block's other points, without replacement.
                std::vector<PointId> rest(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(start));
                const std::size_t fill = ns - t.size();
                for (std::size_t f = 0; f < fill; ++f) {
                    std::uniform_int_distribution<std::size_t> pick(f, rest.size() - 1);
                    std::swap(rest[f], rest[pick(rng)]);
                    t.push_back(rest[f]);
                }
            }
            chosen.push_back(std::move(t));
        }
    }

    std::vector<SampleTile> tiles;
    tiles.reserve(chosen.size());
    const bool labeled = cloud.has_labels();
    for (auto& ids : chosen) {
        SampleTile tile;
        tile.features.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(kFeatureDims));
        tile.labels.assign(ns, 0);
        Vec3 centroid{};
        for (PointId id : ids) centroid += cloud.position(id);
        centroid = centroid / static_cast<double>(ns);
        for (std::size_t r = 0; r < ns; ++r) {
            const PointId id = ids[r];
            const Vec3 p = cloud.position(id) - centroid;
            const auto rr = static_cast<Eigen::Index>(r);
            tile.features(rr, 0) = p.x;
            tile.features(rr, 1) = p.y;
            tile.features(rr, 2) = p.z;
            tile.features(rr, 3) = l1[id];
            tile.features(rr, 4) = l2[id];
            tile.features(rr, 5) = l3[id];
            if (labeled) tile.labels[r] = cloud.labels()[id];
        }
        tile.ids = std::move(ids);
        tiles.push_back(std::move(tile));
    }
    return tiles;
}

// --------------------------------------------------------- forward/backward

namespace {

struct LayerCache {
    Mat out;
    L::BnCache bn;
};

struct Cache {
    Mat xyz;
    KnnGraph g0;
    std::vector<LayerCache> tedge;
    Mat tmax;
    L::IndexMat targ;
    LayerCache tpoint;
    Mat tg;
    std::vector<std::int32_t> tgarg;
    std::vector<LayerCache> tfc;
    LayerCache tout;
    Mat3 M;
    std::vector<Mat> f;  // f[0] is the network input after the transform
    std::vector<KnnGraph> graphs;
    std::vector<LayerCache> econv;
    std::vector<L::IndexMat> earg;
    Mat concat;
    LayerCache agg;
    Mat g;
    std::vector<std::int32_t> garg;
    Mat head_in;
    std::vector<LayerCache> head;
    LayerCache hout;
    BnBatchStats bn;
};

Mat prepare_input(const ArchConfig& a, const Mat& features) {
    if (features.cols() != static_cast<Eigen::Index>(kFeatureDims)) {
        throw ContractError("segnet: features must have 6 columns");
    }
    if (features.rows() <= static_cast<Eigen::Index>(a.k)) {
        throw ContractError("segnet: tile needs more than k points");
    }
    if (!features.allFinite()) throw NumericalFault("segnet: non-finite value in input features");
    Mat X = features;
    if (a.standardize_lambda) {
        for (Eigen::Index c = 3; c < 6; ++c) {
            const double mean = X.col(c).mean();
            const double sd = std::sqrt((X.col(c).array() - mean).square().mean());
            X.col(c).array() -= mean;
            if (sd > 0.0) X.col(c) /= sd;
        }
    }
    return X;
}

class Net {
public:
    explicit Net(const SegModel& m) : m_(m), a_(m.arch()), o_(offsets(m.arch())), P_(m.params()) {}

    void forward(const Mat& features, Mode mode, Cache& c) const {
        const std::size_t slots = m_.buffers().size() / 2;
        c.bn.mean.assign(slots, RowVec());
        c.bn.var.assign(slots, RowVec());
        c.bn.rows.assign(slots, 0);
        const Mat X = prepare_input(a_, features);
        const auto& Ls = m_.layers();
        const std::size_t k = a_.k;

        // Spatial transform.
        c.xyz = X.leftCols(3);
        c.g0 = knn_graph(c.xyz, k);
        c.tedge.resize(a_.tnet_edge.size());
        for (std::size_t i = 0; i < c.tedge.size(); ++i) {
            if (i == 0) {
                apply(Ls[o_.tedge], c.xyz, &c.g0, mode, c.tedge[0], c.bn);
            } else {
                apply(Ls[o_.tedge + i], c.tedge[i - 1].out, nullptr, mode, c.tedge[i], c.bn);
            }
        }
        L::neighbor_max_forward(c.tedge.back().out, c.g0, c.tmax, c.targ);
        apply(Ls[o_.tpoint], c.tmax, nullptr, mode, c.tpoint, c.bn);
        L::global_max_forward(c.tpoint.out, c.tg, c.tgarg);
        c.tfc.resize(a_.tnet_fc.size());
        for (std::size_t i = 0; i < c.tfc.size(); ++i) {
            apply(Ls[o_.tfc + i], i == 0 ? c.tg : c.tfc[i - 1].out, nullptr, mode, c.tfc[i], c.bn);
        }
        apply(Ls[o_.tout], c.tfc.empty() ? c.tg : c.tfc.back().out, nullptr, mode, c.tout, c.bn);
        c.M = Mat3::Identity();
        for (int r = 0; r < 3; ++r) {
            for (int q = 0; q < 3; ++q) c.M(r, q) += c.tout.out(0, 3 * r + q);
        }

        // Dynamic-graph EdgeConv stack.
        const std::size_t nl = a_.edge_widths.size();
        c.f.resize(nl + 1);
        c.graphs.resize(nl);
        c.econv.resize(nl);
        c.earg.resize(nl);
        c.f[0] = X;
        c.f[0].leftCols(3) = c.xyz * c.M;
        for (std::size_t l = 0; l < nl; ++l) {
            c.graphs[l] = knn_graph(c.f[l], k);
            apply(Ls[o_.edge + l], c.f[l], &c.graphs[l], mode, c.econv[l], c.bn);
            L::neighbor_max_forward(c.econv[l].out, c.graphs[l], c.f[l + 1], c.earg[l]);
        }
        const Eigen::Index n = X.rows();
        const auto cw = static_cast<Eigen::Index>(concat_width(a_));
        c.concat.resize(n, cw);
        for (std::size_t l = 0, col = 0; l < nl; ++l) {
            const auto w = static_cast<Eigen::Index>(a_.edge_widths[l]);
            c.concat.middleCols(static_cast<Eigen::Index>(col), w) = c.f[l + 1];
            col += a_.edge_widths[l];
        }

        // Global descriptor and per-point head.
        apply(Ls[o_.agg], c.concat, nullptr, mode, c.agg, c.bn);
        L::global_max_forward(c.agg.out, c.g, c.garg);
        const auto ga = static_cast<Eigen::Index>(a_.agg);
        c.head_in.resize(n, ga + cw);
        c.head_in.leftCols(ga) = c.g.replicate(n, 1);
        c.head_in.rightCols(cw) = c.concat;
        c.head.resize(a_.head.size());
        for (std::size_t i = 0; i < c.head.size(); ++i) {
            apply(Ls[o_.head + i], i == 0 ? c.head_in : c.head[i - 1].out, nullptr, mode, c.head[i], c.bn);
        }
        apply(Ls[o_.hout], c.head.empty() ? c.head_in : c.head.back().out, nullptr, mode, c.hout, c.bn);
    }

    // dlogits: n x 1. Accumulates into grads.
    void backward(const Cache& c, const Mat& dlogits, std::vector<Mat>& grads) const {
        const auto& Ls = m_.layers();
        const std::size_t k = a_.k;
        const Eigen::Index n = c.xyz.rows();
        const auto ga = static_cast<Eigen::Index>(a_.agg);
        const auto cw = static_cast<Eigen::Index>(concat_width(a_));

        Mat d = dlogits;
        Mat dx;
        back(Ls[o_.hout], c.head.empty() ? c.head_in : c.head.back().out, nullptr, c.hout, d, grads, &dx);
        for (std::size_t i = c.head.size(); i-- > 0;) {
            d = std::move(dx);
            back(Ls[o_.head + i], i == 0 ? c.head_in : c.head[i - 1].out, nullptr, c.head[i], d, grads, &dx);
        }
        const Mat& dhead_in = dx;
        Mat dg = dhead_in.leftCols(ga).colwise().sum();
        Mat dconcat = dhead_in.rightCols(cw);
        Mat dA = Mat::Zero(n, ga);
        L::global_max_backward(c.garg, dg, dA);
        Mat dc_agg;
        back(Ls[o_.agg], c.concat, nullptr, c.agg, dA, grads, &dc_agg);
        dconcat += dc_agg;

        const std::size_t nl = a_.edge_widths.size();
        std::vector<Mat> df(nl + 1);
        for (std::size_t l = 0, col = 0; l < nl; ++l) {
            const auto w = static_cast<Eigen::Index>(a_.edge_widths[l]);
            df[l + 1] = dconcat.middleCols(static_cast<Eigen::Index>(col), w);
            col += a_.edge_widths[l];
        }
        for (std::size_t l = nl; l-- > 0;) {
            Mat dE;
            L::neighbor_max_backward(c.earg[l], k, df[l + 1], dE);
            Mat dprev;
            back(Ls[o_.edge + l], c.f[l], &c.graphs[l], c.econv[l], dE, grads, &dprev);
            if (l == 0) {
                df[0] = std::move(dprev);
            } else {
                df[l] += dprev;
            }
        }

        // Into the transform block through xyz' = xyz * M.
        const Mat3 dM = c.xyz.transpose() * df[0].leftCols(3);
        Mat dout(1, 9);
        for (int r = 0; r < 3; ++r) {
            for (int q = 0; q < 3; ++q) dout(0, 3 * r + q) = dM(r, q);
        }
        back(Ls[o_.tout], c.tfc.empty() ? c.tg : c.tfc.back().out, nullptr, c.tout, dout, grads, &dx);
        for (std::size_t i = c.tfc.size(); i-- > 0;) {
            d = std::move(dx);
            back(Ls[o_.tfc + i], i == 0 ? c.tg : c.tfc[i - 1].out, nullptr, c.tfc[i], d, grads, &dx);
        }
        Mat dT = Mat::Zero(n, static_cast<Eigen::Index>(a_.tnet_point));
        L::global_max_backward(c.tgarg, dx, dT);
        Mat dtmax;
        back(Ls[o_.tpoint], c.tmax, nullptr, c.tpoint, dT, grads, &dtmax);
        Mat dE;
        L::neighbor_max_backward(c.targ, k, dtmax, dE);
        for (std::size_t i = c.tedge.size(); i-- > 0;) {
            Mat dprev;
            if (i == 0) {
                back(Ls[o_.tedge], c.xyz, &c.g0, c.tedge[0], dE, grads, nullptr);
            } else {
                back(Ls[o_.tedge + i], c.tedge[i - 1].out, nullptr, c.tedge[i], dE, grads, &dprev);
                dE = std::move(dprev);
            }
        }
    }

private:
    void apply(const LayerSpec& s, const Mat& X, const KnnGraph* g, Mode mode, LayerCache& lc,
               BnBatchStats& st) const {
        Mat Z;
        if (s.edge) {
            L::edge_linear_forward(X, *g, P_[s.w], P_[s.b], Z);
        } else {
            L::linear_forward(X, P_[s.w], P_[s.b], Z);
        }
        if (s.bn) {
            if (mode == Mode::train) {
                L::batchnorm_train(Z, P_[s.gamma], P_[s.beta], a_.bn_eps, lc.out, lc.bn);
                st.mean[s.bn_slot] = lc.bn.mean;
                st.var[s.bn_slot] = lc.bn.var;
                st.rows[s.bn_slot] = static_cast<std::size_t>(Z.rows());
            } else {
                const auto& B = m_.buffers();
                L::batchnorm_eval(Z, P_[s.gamma], P_[s.beta], B[2 * s.bn_slot], B[2 * s.bn_slot + 1], a_.bn_eps,
                                  lc.out);
            }
        } else {
            lc.out = std::move(Z);
        }
        if (s.act) L::leaky_relu_forward(lc.out, a_.leaky_slope);
        if (!lc.out.allFinite()) throw NumericalFault("segnet: non-finite activation in layer " + s.name);
    }

    void back(const LayerSpec& s, const Mat& X, const KnnGraph* g, const LayerCache& lc, Mat& dout,
              std::vector<Mat>& grads, Mat* dX) const {
        if (s.act) L::leaky_relu_backward(lc.out, a_.leaky_slope, dout);
        Mat dZ;
        if (s.bn) {
            L::batchnorm_backward(lc.bn, P_[s.gamma], dout, dZ, grads[s.gamma], grads[s.beta]);
        } else {
            dZ = std::move(dout);
        }
        if (s.edge) {
            L::edge_linear_backward(X, *g, P_[s.w], dZ, grads[s.w], grads[s.b], dX);
        } else {
            L::linear_backward(X, P_[s.w], dZ, grads[s.w], grads[s.b], dX);
        }
    }

    const SegModel& m_;
    const ArchConfig& a_;
    Offsets o_;
    const std::vector<Mat>& P_;
};

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> logits_of(const Cache& c) {
    const Mat& out = c.hout.out;
    return std::vector<double>(out.data(), out.data() + out.size());
}

void check_labels(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels) {
    if (logits.size() != labels.size()) throw ContractError("segnet: logits and labels differ in length");
}

} // namespace

ForwardResult forward(const SegModel& model, const Mat& features, Mode mode) {
    Cache c;
    Net(model).forward(features, mode, c);
    ForwardResult r;
    r.logits = logits_of(c);
    r.transform = c.M;
    r.bn = std::move(c.bn);
    return r;
}

double weighted_bce(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels, double w_pos,
                    double w_neg) {
    check_labels(logits, labels);
    if (logits.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        sum += labels[i] ? w_pos * softplus(-logits[i]) : w_neg * softplus(logits[i]);
    }
    return sum / static_cast<double>(logits.size());
}

GradientResult gradient(const SegModel& model, const SampleTile& tile, double w_pos, double w_neg) {
    Cache c;
    const Net net(model);
    net.forward(tile.features, Mode::train, c);
    const std::vector<double> logits = logits_of(c);
    GradientResult r;
    r.loss = weighted_bce(logits, tile.labels, w_pos, w_neg);
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    Mat dlogits(static_cast<Eigen::Index>(logits.size()), 1);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double s = sigmoid(logits[i]);
        dlogits(static_cast<Eigen::Index>(i), 0) = inv_n * (tile.labels[i] ? -w_pos * (1.0 - s) : w_neg * s);
    }
    r.grads.reserve(model.params().size());
    for (const auto& p : model.params()) r.grads.push_back(Mat::Zero(p.rows(), p.cols()));
    net.backward(c, dlogits, r.grads);
    r.bn = std::move(c.bn);
    return r;
}

// ------------------------------------------------------------------- train

namespace {

void update_running_stats(SegModel& model, const BnBatchStats& st) {
    const double mom = model.arch().bn_momentum;
    auto& B = model.buffers();
    for (std::size_t s = 0; s < st.rows.size(); ++s) {
        const double n = static_cast<double>(st.rows[s]);
        const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
        B[2 * s] = (1.0 - mom) * B[2 * s] + mom * st.mean[s];
        B[2 * s + 1] = (1.0 - mom) * B[2 * s + 1] + (mom * unbias) * st.var[s];
    }
}

template <typename Fn>
void for_tiles(std::size_t count, Execution exec, Fn&& fn) {
    std::exception_ptr error;
    const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 1) if (exec == Execution::parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(boltpipe_segnet_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

} // namespace

double evaluate_loss(const SegModel& model, const std::vector<SampleTile>& tiles, double w_pos, double w_neg,
                     Mode norm) {
    if (tiles.empty()) return 0.0;
    std::vector<double> losses(tiles.size());
    for_tiles(tiles.size(), Execution::parallel, [&](std::size_t t) {
        losses[t] = weighted_bce(forward(model, tiles[t].features, norm).logits, tiles[t].labels, w_pos, w_neg);
    });
    double sum = 0.0;
    for (double v : losses) sum += v;
    return sum / static_cast<double>(tiles.size());
}

TrainResult train(SegModel& model, const std::vector<SampleTile>& tiles, const std::vector<SampleTile>& validation,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (tiles.empty()) throw ContractError("train: no training tiles");
    auto& P = model.params();
    std::vector<Mat> m1, m2;
    for (const auto& p : P) {
        m1.push_back(Mat::Zero(p.rows(), p.cols()));
        m2.push_back(Mat::Zero(p.rows(), p.cols()));
    }
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr =
            cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<GradientResult> res(count);
            for_tiles(count, cfg.exec, [&](std::size_t q) {
                res[q] = gradient(model, tiles[order[start + q]], cfg.w_pos, cfg.w_neg);
            });
            for (std::size_t q = 0; q < count; ++q) {
                if (!std::isfinite(res[q].loss)) {
                    throw NumericalFault("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(batch + 1));
                }
                epoch_loss += res[q].loss;
                if (q > 0) {
                    for (std::size_t p = 0; p < P.size(); ++p) res[0].grads[p] += res[q].grads[p];
                }
                update_running_stats(model, res[q].bn);
            }
            ++step;
            const double inv = 1.0 / static_cast<double>(count);
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < P.size(); ++p) {
                const Mat g = res[0].grads[p] * inv;
                m1[p] = cfg.adam_beta1 * m1[p] + (1.0 - cfg.adam_beta1) * g;
                m2[p] = cfg.adam_beta2 * m2[p] + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
                P[p].array() -= lr * (m1[p].array() / c1) / ((m2[p].array() / c2).sqrt() + cfg.adam_eps);
            }
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(tiles.size()));
        if (!validation.empty()) result.val_loss.push_back(evaluate_loss(model, validation, cfg.w_pos, cfg.w_neg, cfg.val_norm));
        if (cfg.verbose) {
            log::info("epoch " + std::to_string(epoch + 1) + " train_loss=" + std::to_string(result.train_loss.back()) +
                      (validation.empty() ? "" : " val_loss=" + std::to_string(result.val_loss.back())));
        }
    }
    return result;
}

TileSplit split_folds(const std::vector<SampleTile>& tiles, std::size_t folds, std::size_t fold, std::uint64_t seed) {
    TileSplit out;
    if (folds <= 1) {
        out.train = tiles;
        return out;
    }
    if (fold >= folds) throw ContractError("split_folds: fold index out of range");
    if (tiles.size() < folds) throw ConfigError("split_folds: fewer tiles than folds");
    std::vector<std::size_t> order(tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i % folds == fold ? out.validation : out.train).push_back(tiles[order[i]]);
    }
    return out;
}

// ----------------------------------------------------------------- predict

PointCloud predict(const SegModel& model, const PointCloud& cloud, const PredictConfig& cfg) {
    if (cfg.tile_size <= model.arch().k) throw ContractError("predict: tile size must exceed k");
    const auto tiles = make_tiles(cloud, {cfg.tile_size, 2.0, cfg.seed});
    std::vector<std::vector<double>> probs(tiles.size());
    for_tiles(tiles.size(), cfg.exec, [&](std::size_t t) {
        const auto logits = forward(model, tiles[t].features, cfg.norm).logits;
        probs[t].resize(logits.size());
        std::transform(logits.begin(), logits.end(), probs[t].begin(), sigmoid);
    });
    std::vector<double> sum(cloud.size(), 0.0);
    std::vector<std::uint32_t> count(cloud.size(), 0);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        for (std::size_t r = 0; r < tiles[t].ids.size(); ++r) {
            sum[tiles[t].ids[r]] += probs[t][r];
            ++count[tiles[t].ids[r]];
        }
    }
    std::vector<std::uint8_t> labels(cloud.size());
    std::vector<double> mean(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        mean[i] = sum[i] / static_cast<double>(count[i]);
        labels[i] = mean[i] > 0.5 ? 1 : 0;
    }
    PointCloud out = cloud;
    out.set_labels(std::move(labels));
    out.set_channel("probability", std::move(mean));
    return out;
}

} // namespace boltpipe::segnet
