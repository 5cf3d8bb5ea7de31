#include "boltpipe/metrics.hpp"

#include <algorithm>
#include <bit>
#include <unordered_map>

#include "boltpipe/geomfilter.hpp"
#include "boltpipe/log.hpp"

namespace boltpipe {

double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::uint8_t class_id) {
    if (pred.size() != gt.size()) throw ContractError("iou: prediction and ground truth differ in length");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == class_id, g = gt[i] == class_id;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Instance> extract_instances(const PointCloud& cloud, std::span<const std::uint8_t> labels, double eps,
                                        std::size_t min_pts) {
    if (labels.size() != cloud.size()) throw ContractError("extract_instances: label count differs from cloud size");
    std::vector<PointId> ids;
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            ids.push_back(static_cast<PointId>(i));
            pts.push_back(cloud.position(i));
        }
    }
    if (pts.empty()) return {};
    const ClusterSet cs = dbscan(pts, eps, min_pts);
    std::vector<Instance> out = cs.members();
    for (auto& inst : out) {
        for (auto& id : inst) id = ids[id];
    }
    return out;
}

MatchCounts match_instances(const std::vector<Instance>& pred, const std::vector<Instance>& gt, double threshold) {
    auto as_set = [](const std::vector<Instance>& v) {
        std::vector<PointId> all;
        for (const auto& inst : v) all.insert(all.end(), inst.begin(), inst.end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        return all;
    };
    auto covered = [threshold](const Instance& inst, const std::vector<PointId>& pool) {
        std::size_t hit = 0;
        for (PointId id : inst) hit += std::binary_search(pool.begin(), pool.end(), id);
        return !inst.empty() && static_cast<double>(hit) >= threshold * static_cast<double>(inst.size());
    };
    const auto pred_pool = as_set(pred);
    const auto gt_pool = as_set(gt);
    MatchCounts m;
    for (const auto& g : gt) m.fn += !covered(g, pred_pool);
    for (const auto& p : pred) m.fp += !covered(p, gt_pool);
    m.tp = gt.size() - m.fn;
    return m;
}

PrecisionRecall precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrecisionRecall r;
    const auto t = static_cast<double>(tp);
    if (tp + fp > 0) r.precision = t / static_cast<double>(tp + fp);
    if (tp + fn > 0) r.recall = t / static_cast<double>(tp + fn);
    if (r.precision > 0.0 && r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

namespace {

struct CoordKey {
    std::uint64_t x, y, z;
    bool operator==(const CoordKey&) const = default;
};

struct CoordHash {
    std::size_t operator()(const CoordKey& k) const {
        std::uint64_t h = k.x * 0x9E3779B97F4A7C15ull;
        h ^= k.y + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
        h ^= k.z + 0x94D049BB133111EBull + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

CoordKey key_of(const Vec3& p) {
    // +0.0 and -0.0 compare equal; fold them onto one key.
    auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v); };
    return {bits(p.x), bits(p.y), bits(p.z)};
}

} // namespace

std::vector<std::uint8_t> align_labels(const PointCloud& pred, const PointCloud& gt, std::size_t* unmatched_pred) {
    const auto pl = pred.labels();
    if (unmatched_pred) *unmatched_pred = 0;
    if (pred.size() == gt.size() &&
        std::equal(pred.positions().begin(), pred.positions().end(), gt.positions().begin())) {
        return {pl.begin(), pl.end()};
    }
    struct Entry {
        std::uint8_t label;
        bool used;
    };
    std::unordered_map<CoordKey, Entry, CoordHash> lookup;
    lookup.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto [it, fresh] = lookup.emplace(key_of(pred.position(i)), Entry{pl[i], false});
        if (!fresh) it->second.label = std::max(it->second.label, pl[i]);
    }
    std::vector<std::uint8_t> out(gt.size(), 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto it = lookup.find(key_of(gt.position(i)));
        if (it != lookup.end()) {
            out[i] = it->second.label;
            it->second.used = true;
        }
    }
    std::size_t unmatched = 0;
    for (const auto& [key, e] : lookup) unmatched += !e.used;
    if (unmatched > 0) {
        log::warn("eval: " + std::to_string(unmatched) + " prediction points have no ground-truth counterpart");
    }
    if (unmatched_pred) *unmatched_pred = unmatched;
    return out;
}

EvalReport evaluate(const PointCloud& pred, const PointCloud& gt, const EvalConfig& cfg) {
    if (!gt.has_labels()) throw ContractError("eval: ground truth carries no labels");
    if (!pred.has_labels()) throw ContractError("eval: prediction carries no labels");
    EvalReport r;
    r.points = gt.size();
    const std::vector<std::uint8_t> p = align_labels(pred, gt, &r.unmatched_pred_points);
    const auto g = gt.labels();
    r.iou_bolt = iou(p, g, 1);
    r.iou_background = iou(p, g, 0);
    const auto pi = extract_instances(gt, p, cfg.instance_eps, cfg.instance_min_pts);
    const auto gi = extract_instances(gt, g, cfg.instance_eps, cfg.instance_min_pts);
    r.pred_instances = pi.size();
    r.gt_instances = gi.size();
    const MatchCounts m = match_instances(pi, gi, cfg.match_threshold);
    r.tp = m.tp;
    r.fp = m.fp;
    r.fn = m.fn;
    const PrecisionRecall pr = precision_recall_f1(m.tp, m.fp, m.fn);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.f1 = pr.f1;
    return r;
}

} // namespace boltpipe
