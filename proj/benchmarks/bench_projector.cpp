// Microbenchmarks for the hot paths: the analytic Gaussian projector
// (forward and gradient), volume rasterization, and the voxel baselines.
// Run with --benchmark_filter=... to focus on one; sizes are desk scale so
// a full sweep finishes in under a minute.

#include <benchmark/benchmark.h>

#include "aet/baselines.hpp"
#include "aet/random.hpp"
#include "aet/simulator.hpp"
#include "aet/splat.hpp"
#include "aet/types.hpp"

using namespace aet;

namespace {

/// A cloud of `k` unit-amplitude atoms spread through a 12 Angstrom cube.
AtomCloud random_cloud(int k, std::uint64_t seed = 42) {
    Rng rng(seed);
    AtomCloud cloud;
    for (int i = 0; i < k; ++i)
        cloud.push_atom({{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0),
                          rng.uniform(-6.0, 6.0)},
                         rng.uniform(0.4, 0.6),
                         1.0});
    return cloud;
}

TiltGeometry desk_geometry(int n_angles) {
    TiltGeometry geom;
    geom.angles_deg.reserve(n_angles);
    for (int i = 0; i < n_angles; ++i)
        geom.angles_deg.push_back(-70.0 + 140.0 * i / (n_angles - 1));
    geom.det_rows = 64;
    geom.det_cols = 64;
    geom.pixel_pitch = 0.5;
    return geom;
}

void BM_ProjectCloud(benchmark::State& state) {
    AtomCloud cloud = random_cloud(static_cast<int>(state.range(0)));
    TiltGeometry geom = desk_geometry(static_cast<int>(state.range(1)));
    for (auto _ : state) {
        ProjectionStack stack = project_cloud(cloud, geom);
        benchmark::DoNotOptimize(stack.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_ProjectCloud)->Args({100, 47})->Args({500, 47})->Args({500, 181});

void BM_BackwardL1(benchmark::State& state) {
    AtomCloud truth = random_cloud(static_cast<int>(state.range(0)), 7);
    TiltGeometry geom = desk_geometry(static_cast<int>(state.range(1)));
    ProjectionStack measured = project_cloud(truth, geom);
    AtomCloud cloud = random_cloud(static_cast<int>(state.range(0)));
    SplatGradients grads;
    for (auto _ : state) {
        double loss = backward_l1(cloud, geom, measured, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_BackwardL1)->Args({100, 47})->Args({500, 47});

void BM_RasterizeVolume(benchmark::State& state) {
    AtomCloud cloud = random_cloud(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        VoxelVolume vol =
            rasterize_volume(cloud, VoxelVolume::centered_cube(64, 0.5));
        benchmark::DoNotOptimize(vol.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RasterizeVolume)->Arg(100)->Arg(500);

ProjectionStack fcc_stack(int n_angles) {
    ParticleSpec particle;
    particle.radius = 8.0;
    particle.seed = 3;
    AcquisitionSpec acq;
    acq.scheme = TiltScheme::Custom;
    acq.angle_min = -70.0;
    acq.angle_max = 70.0;
    acq.angle_step = 140.0 / (n_angles - 1);
    acq.pixel_pitch = 0.5;
    acq.det_rows = 64;
    acq.det_cols = 64;
    return synthesize_projections(make_particle(particle), acq);
}

void BM_Fbp(benchmark::State& state) {
    ProjectionStack stack = fcc_stack(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        VoxelVolume vol = fbp(stack, VoxelVolume::centered_cube(64, 0.5));
        benchmark::DoNotOptimize(vol.data.data());
    }
}
BENCHMARK(BM_Fbp)->Arg(47)->Arg(141);

void BM_SartSweep(benchmark::State& state) {
    ProjectionStack stack = fcc_stack(47);
    SartOptions options;
    options.n_sweeps = 1;
    for (auto _ : state) {
        SartResult result = sart(stack, VoxelVolume::centered_cube(64, 0.5), options);
        benchmark::DoNotOptimize(result.volume.data.data());
    }
}
BENCHMARK(BM_SartSweep);

void BM_TraceAtoms(benchmark::State& state) {
    AtomCloud cloud = random_cloud(300);
    VoxelVolume vol = rasterize_volume(cloud, VoxelVolume::centered_cube(64, 0.5));
    for (auto _ : state) {
        auto peaks = trace_atoms(vol);
        benchmark::DoNotOptimize(peaks.data());
    }
}
BENCHMARK(BM_TraceAtoms);

} // namespace

BENCHMARK_MAIN();
