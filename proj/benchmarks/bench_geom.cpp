#include <benchmark/benchmark.h>

#include "shapelinker/geom.hpp"
#include "shapelinker/rng.hpp"
#include "shapelinker/surface.hpp"

namespace geom = shapelinker::geom;
namespace surface = shapelinker::surface;
using shapelinker::Rng;

namespace {

geom::PointCloud random_cloud(Rng& rng, std::size_t n, double scale) {
  geom::PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-scale, scale),
                          rng.uniform(-scale, scale),
                          rng.uniform(-scale, scale));
  }
  return c;
}

}  // namespace

static void BM_ChamferBrute(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const geom::PointCloud a = random_cloud(rng, n, 10.0);
  const geom::PointCloud b = random_cloud(rng, n, 10.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::chamfer_distance_bruteforce(a, b));
  }
}
BENCHMARK(BM_ChamferBrute)->Arg(64)->Arg(256)->Arg(1024);

static void BM_ChamferGrid(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const geom::PointCloud a = random_cloud(rng, n, 10.0);
  const geom::PointCloud b = random_cloud(rng, n, 10.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::chamfer_distance_grid(a, b));
  }
}
BENCHMARK(BM_ChamferGrid)->Arg(64)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_Kabsch(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const geom::PointCloud p = random_cloud(rng, n, 5.0);
  const geom::PointCloud q = random_cloud(rng, n, 5.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::kabsch(p, q));
  }
}
BENCHMARK(BM_Kabsch)->Arg(16)->Arg(128)->Arg(1024);

static void BM_SampleSurface(benchmark::State& state) {
  Rng rng(3);
  surface::AtomSet atoms;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i) {
    atoms.atoms.push_back(surface::Atom{
        surface::Element::C,
        geom::Vec3(rng.uniform(-4, 4), rng.uniform(-4, 4),
                   rng.uniform(-4, 4))});
  }
  const surface::SurfaceParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(surface::sample_surface(atoms, params));
  }
}
BENCHMARK(BM_SampleSurface)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
