#include "flad/continual.hpp"
#include "flad/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace flad;
using namespace flad::test;

namespace {

Dataset blobs_train(std::size_t classes, std::size_t per_class, std::uint64_t seed, double separation = 3.0) {
  BlobParams p;
  p.classes = classes;
  p.samples_per_class = per_class;
  p.separation = separation;
  p.dim = 6;
  return gaussian_blobs(p, seed).train;
}

TrainConfig quick_config(OptimizerKind kind, std::size_t epochs = 3) {
  TrainConfig tc;
  tc.optimizer.kind = kind;
  tc.epochs = epochs;
  tc.batch_size = 16;
  return tc;
}

}  // namespace

TEST_CASE("ascending stream") {
  const auto s = build_stream(10, 5, 2);
  REQUIRE(s.num_phases() == 5);
  for (std::size_t p = 0; p < 5; ++p) {
    CHECK(s.phases[p] == std::vector<int>{static_cast<int>(2 * p), static_cast<int>(2 * p + 1)});
  }
  CHECK(build_stream(10, 1, 10).num_phases() == 1);
  CHECK_THROWS_AS(build_stream(10, 6, 2), ConfigError);
}

TEST_CASE("shuffled stream is reproducible and disjoint") {
  const auto a = build_stream(10, 4, 2, ClassOrder::shuffled, 7);
  const auto b = build_stream(10, 4, 2, ClassOrder::shuffled, 7);
  CHECK(a.phases == b.phases);
  std::set<int> seen;
  for (const auto& ph : a.phases) {
    for (int c : ph) CHECK(seen.insert(c).second);
  }
  CHECK(seen.size() == 8);
  for (std::size_t i = 0; i < a.class_order.size(); ++i) {
    CHECK(a.label_to_index[static_cast<std::size_t>(a.class_order[i])] == static_cast<int>(i));
  }
}

TEST_CASE("remap drops unused classes and relabels incrementally") {
  const auto data = blobs_train(6, 10, 1);
  const auto s = build_stream(6, 2, 2, ClassOrder::shuffled, 3);
  const auto r = s.remap(data);
  CHECK(r.size() == 32);
  CHECK(r.num_classes == 4);
  for (int y : r.y) CHECK((y >= 0 && y < 4));
  CHECK(s.rows_of_phase(r, 1).size() == 16);
}

TEST_CASE("replay buffer stays within capacity and balanced") {
  const auto s = build_stream(10, 5, 2);
  const auto data = s.remap(blobs_train(10, 30, 2));
  for (std::size_t cap : {0u, 7u, 50u, 200u}) {
    ReplayBuffer buf(cap, 4);
    for (std::size_t p = 0; p < 5; ++p) {
      buf.update(data.subset(s.rows_of_phase(data, p)), p);
      CHECK(buf.size() <= cap);
      const auto counts = buf.per_class_counts();
      if (cap == 0) {
        CHECK(buf.size() == 0);
        continue;
      }
      std::size_t lo = cap, hi = 0;
      for (const auto& [cls, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      CHECK(hi - lo <= 1);
      for (const auto& e : buf.entries()) CHECK(e.phase == s.phase_of(e.label));
    }
  }
}

TEST_CASE("replay buffer is reproducible") {
  const auto s = build_stream(10, 5, 2);
  const auto data = s.remap(blobs_train(10, 30, 2));
  ReplayBuffer a(40, 1), b(40, 1);
  for (std::size_t p = 0; p < 3; ++p) {
    a.update(data.subset(s.rows_of_phase(data, p)), p);
    b.update(data.subset(s.rows_of_phase(data, p)), p);
  }
  CHECK(a == b);
}

TEST_CASE("ledger metrics by hand") {
  MetricsLedger l(2);
  l.record(0, {1.0});
  l.record(1, {0.8, 0.9});
  CHECK(std::abs(acc_final(l) - 0.85) < 1e-12);
  CHECK(std::abs(aaa(l) - 0.925) < 1e-12);
}

TEST_CASE("ledger rejects malformed rows") {
  MetricsLedger l(2);
  CHECK_THROWS_AS(l.record(1, {0.5, 0.5}), LedgerError);
  CHECK_THROWS_AS(l.record(0, {1.5}), LedgerError);
  CHECK_THROWS_AS(l.record(0, {0.5, 0.5}), LedgerError);
  l.record(0, {0.5});
  CHECK_THROWS_AS(acc_final(l), LedgerError);
  CHECK_THROWS_AS(aaa(l), LedgerError);
}

TEST_CASE("constant ledger gives Acc = AAA") {
  MetricsLedger l(4);
  for (std::size_t p = 0; p < 4; ++p) l.record(p, std::vector<double>(p + 1, 0.37));
  CHECK(acc_final(l) == doctest::Approx(0.37).epsilon(1e-14));
  CHECK(aaa(l) == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("random ledgers match a second computation") {
  auto rng = make_rng(2, "ledger");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    MetricsLedger l(n);
    std::vector<std::vector<double>> m;
    for (std::size_t p = 0; p < n; ++p) {
      std::vector<double> row;
      for (std::size_t t = 0; t <= p; ++t) row.push_back(std::uniform_real_distribution<double>(0, 1)(rng));
      m.push_back(row);
      l.record(p, row);
    }
    // column-major accumulation, opposite order
    double total = 0.0;
    for (std::size_t p = n; p-- > 0;) {
      double s = 0.0;
      for (std::size_t t = p + 1; t-- > 0;) s += m[p][t];
      total += s / static_cast<double>(p + 1);
    }
    double last = 0.0;
    for (double v : m.back()) last += v;
    CHECK(acc_final(l) == doctest::Approx(last / static_cast<double>(n)).epsilon(1e-12));
    CHECK(aaa(l) == doctest::Approx(total / static_cast<double>(n)).epsilon(1e-12));
    CHECK((aaa(l) >= 0.0 && aaa(l) <= 1.0));
  }
}

TEST_CASE("evaluate counts correct predictions per task") {
  // linear model whose logits are the inputs: prediction = argmax over seen classes
  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden = {};
  spec.classes = 4;
  spec.validate();
  ParamVector w = init_params(spec);
  w.values().setZero();
  for (Eigen::Index i = 0; i < 4; ++i) w[static_cast<std::size_t>(i * 4 + i)] = 1.0;
  const auto stream = build_stream(4, 2, 2);
  Dataset test;
  test.num_classes = 4;
  test.x = Eigen::MatrixXd::Zero(8, 4);
  //           predicted over 4 classes / true label
  const int pred[] = {0, 1, 1, 3, 2, 3, 0, 3};
  const int truth[] = {0, 1, 0, 1, 2, 3, 2, 3};
  for (Eigen::Index r = 0; r < 8; ++r) {
    test.x(r, pred[r]) = 1.0;
    test.y.push_back(truth[r]);
  }
  // after phase 1 (all 4 classes seen): task 0 rows 0-3 -> 2/4, task 1 rows 4-7 -> 3/4
  const auto row1 = evaluate(spec, w, stream, test, 1);
  CHECK(row1 == std::vector<double>{0.5, 0.75});
  // after phase 0 only classes {0,1} compete: row 3 predicts 1 (logit 0 vs 0 tie -> 0)
  const auto row0 = evaluate(spec, w, stream, test, 0);
  REQUIRE(row0.size() == 1);
  CHECK(row0[0] == doctest::Approx(0.5));
}

TEST_CASE("random classifier sits at chance") {
  const std::size_t k = 5;
  const auto stream = build_stream(k, 1, k);
  BlobParams p;
  p.classes = k;
  p.dim = 6;
  p.samples_per_class = 1000;
  p.separation = 0.0;
  const auto test = stream.remap(gaussian_blobs(p, 3).test);
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden = {16};
  spec.classes = k;
  spec.seed = 99;
  const auto row = evaluate(spec, jittered_params(spec, 3, 1.0), stream, test, 0);
  const double n = static_cast<double>(test.size());
  const double sd = std::sqrt(0.2 * 0.8 / n);
  CHECK(std::abs(row[0] - 0.2) < 3 * sd + 1e-12);
}

TEST_CASE("evaluate needs test rows for every task") {
  const auto stream = build_stream(4, 2, 2);
  Dataset test;
  test.num_classes = 4;
  test.x = Eigen::MatrixXd::Zero(1, 3);
  test.y = {0};
  ModelSpec spec;
  spec.input_dim = 3;
  spec.classes = 4;
  CHECK_THROWS_AS(evaluate(spec, init_params(spec), stream, test, 1), LedgerError);
}

TEST_CASE("phases are bitwise reproducible and the head grows from zero") {
  const auto stream = build_stream(6, 3, 2);
  const auto train = stream.remap(blobs_train(6, 20, 5));
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden = {8};
  spec.classes = 6;
  spec.seed = 1;
  auto run = [&] {
    ParamVector w = init_params(spec);
    OptimizerState state = OptimizerState::init(w, 2);
    ReplayBuffer replay(12, 3);
    std::vector<ParamVector> out;
    for (std::size_t p = 0; p < 3; ++p) {
      auto r = run_phase(stream, p, spec, train, w, state, quick_config(OptimizerKind::flad), replay, 4);
      w = r.w;
      state = r.state;
      out.push_back(w);
    }
    return std::make_pair(out, replay);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("unseen head rows are untouched and new rows start from zero") {
  const auto stream = build_stream(6, 3, 2);
  const auto train = stream.remap(blobs_train(6, 20, 5));
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden = {8};
  spec.classes = 6;
  spec.seed = 1;
  auto tc = quick_config(OptimizerKind::sgd);
  tc.optimizer.hp.weight_decay = 0.0;
  ReplayBuffer replay(0, 0);
  const ParamVector w = init_params(spec);
  const auto r = run_phase(stream, 0, spec, train, w, OptimizerState::init(w), tc, replay, 4);
  const auto& head = w.span("W1");
  const auto& bias = w.span("b1");
  for (std::size_t row = 2; row < 6; ++row) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(r.w[head.offset + row * 8 + c] == w[head.offset + row * 8 + c]);
    CHECK(r.w[bias.offset + row] == w[bias.offset + row]);
  }
  ParamVector z = r.w;
  zero_head_rows(spec, z, 2, 4);
  for (std::size_t c = 0; c < 8; ++c) CHECK(z[head.offset + 2 * 8 + c] == 0.0);
  CHECK(z[bias.offset + 3] == 0.0);
  CHECK(z[head.offset + 4 * 8] == r.w[head.offset + 4 * 8]);
}

TEST_CASE("window restricts sharpness steps and sgd counts none") {
  const auto stream = build_stream(4, 1, 4);
  const auto train = stream.remap(blobs_train(4, 20, 6));
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden = {8};
  spec.classes = 4;
  ReplayBuffer replay(0, 0);
  auto tc = quick_config(OptimizerKind::flad, 10);
  tc.schedule.window_start = 0.8;
  const auto w = init_params(spec);
  const auto r = run_phase(stream, 0, spec, train, w, OptimizerState::init(w), tc, replay, 1);
  CHECK(r.sharpness_steps * 5 == r.steps);
  for (std::size_t e = 0; e < 10; ++e) CHECK(r.epochs[e].sharpness_active == (e >= 8));
  const auto s = run_phase(stream, 0, spec, train, w, OptimizerState::init(w), quick_config(OptimizerKind::sgd), replay,
                           1);
  CHECK(s.sharpness_steps == 0);
}
