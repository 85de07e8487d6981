#include <doctest.h>

#include <cmath>
#include <numbers>

#include "relaybeam/beams.hpp"

using namespace relaybeam;
using std::numbers::pi;

namespace {

PathSet random_paths(Rng& rng, int n_paths, double max_delay_symbols, const ChannelParams& p) {
  std::uniform_real_distribution<double> u(0.0, pi);
  std::uniform_real_distribution<double> d(0.0, max_delay_symbols);
  PathSet ps;
  for (int l = 0; l < n_paths; ++l)
    ps.paths.push_back({complex_normal(rng, std::sqrt(0.5)), u(rng), u(rng), d(rng) * p.symbol_period, 1});
  return ps;
}

double hand_se(const CVector& f, const CVector& w, const std::vector<CMatrix>& h, double snr) {
  double acc = 0.0;
  for (const auto& hk : h) {
    cplx g = 0.0;
    for (Eigen::Index r = 0; r < hk.rows(); ++r)
      for (Eigen::Index c = 0; c < hk.cols(); ++c) g += std::conj(w[r]) * hk(r, c) * f[c];
    acc += std::log2(1.0 + snr * std::norm(g));
  }
  return acc / double(h.size());
}

}  // namespace

TEST_CASE("sweep slot index") {
  CHECK(sweep_slot_index(1, 1, 16, 64) == 1);
  CHECK(sweep_slot_index(4, 16, 16, 64) == 1);
  CHECK(sweep_slot_index(5, 1, 16, 64) == 2);
  CHECK(sweep_slot_index(16, 16, 16, 64) == 4);
  CHECK(sweep_slot_index(3, 2, 16, 1) == 34);
  CHECK_THROWS_AS(sweep_slot_index(0, 1, 16, 64), std::invalid_argument);
  CHECK_THROWS_AS(sweep_slot_index(1, 17, 16, 64), std::invalid_argument);
}

TEST_CASE("alignment durations") {
  using enum AlignMode;
  CHECK(alignment_duration(InitialAccess, LinkKind::Direct, 16, 16, 16, 4, 64, 1) == 4);
  CHECK(alignment_duration(InitialAccess, LinkKind::Indirect, 16, 16, 16, 4, 64, 1) == 8);
  CHECK(alignment_duration(BeamTracking, LinkKind::Direct, 16, 16, 16, 4, 64, 1) == 1);
  CHECK(alignment_duration(BeamTracking, LinkKind::Indirect, 16, 16, 16, 4, 64, 1) == 2);
  CHECK(alignment_duration(InitialAccess, LinkKind::Direct, 16, 16, 16, 4, 64, 3) == 12);
  CHECK(alignment_duration(InitialAccess, LinkKind::Indirect, 8, 16, 4, 4, 10, 1) == 4 + 7);
  CHECK(alignment_duration(BeamTracking, LinkKind::Direct, 16, 16, 16, 4, 3, 2) == 4);
  CHECK_THROWS_AS(alignment_duration(InitialAccess, LinkKind::Direct, 0, 16, 16, 4, 64, 1), std::invalid_argument);
}

TEST_CASE("spectral efficiency matches the subcarrier average") {
  ChannelParams p;
  p.n_tx = 8;
  p.n_rx = 6;
  p.n_subcarriers = 32;
  Rng rng(21);
  const Codebook f = build_codebook(8, 8);
  const Codebook w = build_codebook(6, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const PathSet ps = random_paths(rng, 3, 2.5, p);
    const auto h = channel_matrices(ps, p, default_pulse(p));
    const double snr = 0.1 + trial;
    const double got = spectral_efficiency(f[trial % 8], w[trial % 6], h, snr);
    CHECK(got == doctest::Approx(hand_se(f[trial % 8], w[trial % 6], h, snr)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("spectral efficiency rejects non-unit beams and empty channels") {
  const std::vector<CMatrix> h{CMatrix::Identity(4, 4)};
  CVector f = CVector::Zero(4);
  f[0] = 2.0;
  const CVector w = array_response(0.4, 4);
  CHECK_THROWS_AS(spectral_efficiency(f, w, h, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(spectral_efficiency(w, w, {}, 1.0), std::invalid_argument);
}

TEST_CASE("mmse and effective snr closed forms") {
  CHECK(mmse(0.5, 8, 1.0) == doctest::Approx(1.0 / 5.0));
  CHECK(mmse(0.0, 8, 1.0) == 1.0);
  CHECK(effective_snr(1.0, 0.2) == doctest::Approx(0.8 / 1.2));
  CHECK(effective_snr(4.0, 1.0) == 0.0);
  CHECK(effective_snr(4.0, 0.0) == 4.0);
}

TEST_CASE("two-hop rate") {
  CHECK(two_hop_se(2.0, 2.0) == doctest::Approx(1.0));
  CHECK(two_hop_se(1.0, 3.0) == doctest::Approx(0.75));
  CHECK(two_hop_se(0.0, 3.0) == 0.0);
  CHECK(two_hop_se(3.0, 0.0) == 0.0);
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng);
    const double b = u(rng);
    CHECK(two_hop_se(a, b) <= std::min(a, b));
  }
}

TEST_CASE("feedback bookkeeping") {
  FeedbackState fb;
  fb.open_block();
  for (int i = 0; i < 4; ++i) fb.pilot_frame();
  CHECK(fb.beta() == 1.0);
  fb.data_frame();
  fb.data_frame();
  CHECK(fb.beta() == doctest::Approx(4.0 / 6.0));
  CHECK(fb.n_b() == 6.0);
  CHECK(fb.mmse_at(1.0) == doctest::Approx(1.0 / 5.0));
  fb.open_block();
  CHECK(fb.mmse_at(1.0) == 1.0);
}

TEST_CASE("link response agrees with full matrix evaluation") {
  ChannelParams p;
  p.n_tx = 8;
  p.n_rx = 8;
  p.n_subcarriers = 16;
  const Codebook f = build_codebook(8, 8);
  const Codebook w = build_codebook(8, 8);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const PathSet ps = random_paths(rng, 1 + trial % 3, trial % 2 ? 2.0 : 0.0, p);
    const LinkResponse resp(ps, f, w, p, default_pulse(p));
    CHECK(resp.flat() == (trial % 2 == 0));
    const auto h = channel_matrices(ps, p, default_pulse(p));
    BeamChoice brute{{1, 1}, -1.0};
    for (int i = 1; i <= 8; ++i)
      for (int j = 1; j <= 8; ++j) {
        const double want = hand_se(f[i - 1], w[j - 1], h, 2.0);
        CHECK(resp.se({i, j}, 2.0) == doctest::Approx(want).epsilon(1e-10));
        if (want > brute.se) brute = {{i, j}, want};
      }
    const BeamChoice best = resp.best(2.0);
    CHECK(best.pair == brute.pair);
    CHECK(best.se == doctest::Approx(brute.se).epsilon(1e-10));
  }
}

TEST_CASE("silent link has zero rate everywhere") {
  ChannelParams p;
  PathSet ps;
  ps.paths.push_back({cplx(1.0, 0.0), 0.3, 0.4, 0.0, 0});
  const Codebook cb = build_codebook(16, 16);
  const LinkResponse resp(ps, cb, cb, p, default_pulse(p));
  CHECK(resp.silent());
  CHECK(resp.se({3, 4}, 10.0) == 0.0);
  CHECK(resp.best(10.0).se == 0.0);
}

TEST_CASE("hop sweep measures candidates in burst order") {
  HopSweep hop(all_pairs(4, 4), 2, 4, 4, 1);
  CHECK(hop.offset_of(0) == 2);
  CHECK(hop.offset_of(3) == 2);
  CHECK(hop.offset_of(4) == 3);
  CHECK(hop.offset_of(15) == 5);
  CHECK(hop.covers(5));
  CHECK_FALSE(hop.covers(6));
  int calls = 0;
  hop.measure_at(3, [&](BeamPair p) {
    ++calls;
    return double(p.rx);
  });
  CHECK(calls == 4);
  const auto& m = hop.measurements();
  CHECK(m[4] == 1.0);
  CHECK(m[7] == 4.0);
  CHECK(m[0] == 0.0);
  CHECK(hop.best().pair == BeamPair{2, 4});
  const auto top = hop.top(2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == BeamPair{2, 4});
  CHECK(top[1] == BeamPair{2, 3});
}

TEST_CASE("hop sweep ties go to the smallest pair") {
  HopSweep hop({{3, 1}, {1, 2}, {2, 2}}, 0, 1, 64, 1);
  hop.measure_at(0, [](BeamPair) { return 1.5; });
  CHECK(hop.best().pair == BeamPair{1, 2});
}

TEST_CASE("sweep schedules") {
  const SweepSizes sz;
  const auto ia_direct = make_sweep_schedule(AlignMode::InitialAccess, 0, sz);
  CHECK(ia_direct.total_slots == 4);
  REQUIRE(ia_direct.hops.size() == 1);
  CHECK(ia_direct.hops[0].candidates().size() == 256);
  const auto ia_relay = make_sweep_schedule(AlignMode::InitialAccess, 1, sz);
  CHECK(ia_relay.total_slots == 8);
  CHECK(ia_relay.hops[1].start_offset() == 4);
  const std::vector<BeamPair> bt{{3, 3}, {3, 4}, {2, 3}, {4, 4}, {9, 9}};
  const auto bt_relay = make_sweep_schedule(AlignMode::BeamTracking, 2, sz, bt, bt);
  CHECK(bt_relay.total_slots == 2);
  CHECK(bt_relay.hops[0].candidates().size() == 4);
  CHECK(bt_relay.hops[1].start_offset() == 1);
  const auto bt_empty = make_sweep_schedule(AlignMode::BeamTracking, 0, sz);
  CHECK(bt_empty.hops[0].candidates().size() == 4);
}

TEST_CASE("best beam pair on frozen channels is the exhaustive argmax") {
  ChannelParams p;
  p.n_subcarriers = 8;
  const Codebook cb = build_codebook(16, 16);
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const PathSet ps = random_paths(rng, 2, 1.5, p);
    const auto h = channel_matrices(ps, p, default_pulse(p));
    const BeamChoice got = best_beam_pair(cb, cb, [&](int) { return h; }, 0, 64, 1, 1.0);
    BeamChoice brute{{1, 1}, -1.0};
    for (int i = 1; i <= 16; ++i)
      for (int j = 1; j <= 16; ++j) {
        const double s = hand_se(cb[i - 1], cb[j - 1], h, 1.0);
        if (s > brute.se) brute = {{i, j}, s};
      }
    CHECK(got.pair == brute.pair);
  }
}

TEST_CASE("best beam pair sees each pair at its own sweep slot") {
  ChannelParams p;
  p.n_tx = p.n_rx = 4;
  p.n_subcarriers = 1;
  const Codebook cb = build_codebook(4, 4);
  // Slot s holds a channel aligned with pair (s, s); pairs examined in slot s
  // are (s, 1..4) when N_SS = 4.
  auto channel_at = [&](int slot) {
    PathSet ps;
    const int k = slot - 10 + 1;
    ps.paths.push_back({cplx(1.0, 0.0), pi * (k % 4) / 4, pi * ((k + 1) % 4) / 4, 0.0, 1});
    return channel_matrices(ps, p, default_pulse(p));
  };
  const BeamChoice got = best_beam_pair(cb, cb, channel_at, 10, 4, 1, 1.0);
  BeamChoice brute{{1, 1}, -1.0};
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j) {
      const auto h = channel_at(10 + sweep_slot_index(i, j, 4, 4, 4) - 1);
      const double s = hand_se(cb[i - 1], cb[j - 1], h, 1.0);
      if (s > brute.se) brute = {{i, j}, s};
    }
  CHECK(got.pair == brute.pair);
  CHECK(got.se == doctest::Approx(brute.se));
}
