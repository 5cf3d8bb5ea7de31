// Serial reference vs OpenMP path for each parallel kernel.

#include <benchmark/benchmark.h>

#include "boltpipe/cloud_ops.hpp"
#include "boltpipe/geomfeat.hpp"
#include "boltpipe/maps.hpp"
#include "boltpipe/preprocess.hpp"
#include "boltpipe/segnet.hpp"
#include "boltpipe/synth.hpp"

using namespace boltpipe;

namespace {

const PointCloud& scan() {
    static const PointCloud cloud = [] {
        SynthConfig cfg;
        cfg.length = 2.0;
        cfg.bolt_count = 8;
        cfg.stray_cluster_count = 2;
        cfg.debris_count = 1;
        return generate_scan(cfg).cloud;
    }();
    return cloud;
}

const SpatialIndex& scan_index() {
    static const SpatialIndex index(scan().positions());
    return index;
}

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

void BM_PlaneResiduals(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(plane_residuals(scan(), 6, mode(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan().size()));
}

void BM_MeanSpacing(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(mean_point_spacing(scan(), scan_index(), mode(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan().size()));
}

void BM_LocalEigenvalues(benchmark::State& state) {
    const double r = influence_radius(0.008);
    for (auto _ : state) benchmark::DoNotOptimize(local_eigenvalues(scan(), scan_index(), r, mode(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan().size()));
}

void BM_DistanceMap(benchmark::State& state) {
    std::vector<Vec3> bolts;
    const auto labels = scan().labels();
    for (std::size_t i = 0; i < scan().size(); ++i) {
        if (labels[i] == 1) bolts.push_back(scan().position(i));
    }
    for (auto _ : state) benchmark::DoNotOptimize(distance_map(scan(), bolts, mode(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan().size()));
}

void BM_DistributionMap(benchmark::State& state) {
    const auto centroids = bolt_centroids(scan(), scan().labels());
    for (auto _ : state) benchmark::DoNotOptimize(distribution_map(scan(), centroids, 2.0, mode(state)));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan().size()));
}

void BM_FeatureKnnGraph(benchmark::State& state) {
    const auto tiles = segnet::make_tiles(scan(), {2048, 2.0, 7});
    for (auto _ : state) benchmark::DoNotOptimize(segnet::knn_graph(tiles.front().features, 20, mode(state)));
    state.SetItemsProcessed(state.iterations() * 2048);
}

} // namespace

BENCHMARK(BM_PlaneResiduals)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeanSpacing)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalEigenvalues)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceMap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistributionMap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeatureKnnGraph)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
