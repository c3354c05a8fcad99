#include <benchmark/benchmark.h>

#include "dtnsim/bsp.hpp"
#include "dtnsim/bundle.hpp"
#include "dtnsim/fragmentation.hpp"
#include "dtnsim/linkbudget.hpp"
#include "dtnsim/orbital.hpp"
#include "dtnsim/scenario.hpp"

using namespace dtnsim;

namespace {

const SymmetricKey& key() {
  static const SymmetricKey k = derive_key(KeyConfig{"bench-secret", "bench-salt", 100000});
  return k;
}

Bytes payload(std::size_t n) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i * 131 + 7);
  return b;
}

void BM_EncryptSign(benchmark::State& state) {
  const Bytes plain = payload(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    PCB pcb = pcb_encrypt(plain, key());
    PIB pib = pib_create(sha256_hex(pcb.ciphertext), key());
    benchmark::DoNotOptimize(pib);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_EncryptSign)->RangeMultiplier(4)->Range(64, 16384);

void BM_VerifyDecrypt(benchmark::State& state) {
  const Bytes plain = payload(static_cast<std::size_t>(state.range(0)));
  const PCB pcb = pcb_encrypt(plain, key());
  const PIB pib = pib_create(sha256_hex(pcb.ciphertext), key());
  for (auto _ : state) {
    const bool ok = pib_verify(pib, sha256_hex(pcb.ciphertext), key());
    Bytes out = pcb_decrypt(pcb, key());
    benchmark::DoNotOptimize(ok);
    benchmark::DoNotOptimize(out);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_VerifyDecrypt)->RangeMultiplier(4)->Range(64, 16384);

void BM_KeyDerivation(benchmark::State& state) {
  int n = 0;  // fresh secret each time, derive_key caches
  for (auto _ : state) benchmark::DoNotOptimize(derive_key(KeyConfig{"kdf-" + std::to_string(n++), "bench-salt", 100000}));
}
BENCHMARK(BM_KeyDerivation)->Unit(benchmark::kMillisecond);

void BM_FragmentReassemble(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Bytes plain = payload(static_cast<std::size_t>(state.range(0)));
  const DTNBundle b = create_bundle(plain, Endpoint("tokyo"), Endpoint("ISS"), {}, key(), make_utc(2025, 1, 1), rng);
  const FragmentPolicy policy{2048, 1024};
  for (auto _ : state) {
    auto frags = maybe_fragment(b, policy, key(), rng);
    ReassemblyTable table;
    for (const auto& f : frags) table.accept_fragment(f, key(), make_utc(2025, 1, 1));
    auto buf = table.take(b.bundle_id);
    benchmark::DoNotOptimize(reassemble(*buf, key()));
  }
}
BENCHMARK(BM_FragmentReassemble)->Arg(4096)->Arg(16384);

void BM_Serialize(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const DTNBundle b = create_bundle(payload(1024), Endpoint("tokyo"), Endpoint("ISS"), {}, key(), make_utc(2025, 1, 1), rng);
  for (auto _ : state) benchmark::DoNotOptimize(deserialize_bundle(serialize(b)));
}
BENCHMARK(BM_Serialize);

void BM_LinkBudget(benchmark::State& state) {
  const PropagatorSpec spec;
  const GroundStation gs = default_stations().front();
  const RFConfig rf;
  UtcTime t = make_utc(2025, 1, 1);
  for (auto _ : state) {
    const auto pos = propagate(spec, t);
    benchmark::DoNotOptimize(evaluate_link(rf, look_angles(gs, pos), true));
    t = add_seconds(t, 1.0);
  }
}
BENCHMARK(BM_LinkBudget);

void BM_PredictPasses24h(benchmark::State& state) {
  const PropagatorSpec spec;
  const GroundStation gs = default_stations().front();
  for (auto _ : state) benchmark::DoNotOptimize(predict_passes(spec, gs, make_utc(2025, 1, 1), 86400.0));
}
BENCHMARK(BM_PredictPasses24h)->Unit(benchmark::kMillisecond);

void BM_RunE1(benchmark::State& state) {
  const ScenarioSpec spec = e1_profile();
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(spec));
}
BENCHMARK(BM_RunE1)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
