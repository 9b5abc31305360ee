// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gtest/gtest.h>

#include <functional>

#include "focalvox/nn/gradcheck.hpp"
#include "focalvox/sfm/sfm.hpp"
#include "oracles/oracles.hpp"
#include "oracles/sfm_oracle.hpp"

namespace focalvox::sfm {
namespace {

using nn::GradTape;
using nn::ParamStore;
using oracle::random_dense;
using oracle::random_sparse;

template <int D>
using Body = std::function<SparseVar<D>(Context<double>&, const SparseVar<D>&)>;

template <int D>
Dense<double> run(const SparseTensor<double, D>& t, const ParamStore<double>& store, const Body<D>& body,
                  nn::BnMode mode = nn::BnMode::Eval) {
  GradTape<double> tape(false);
  Context<double> ctx(tape, store, mode);
  return ctx.output(body(ctx, ctx.input(t))).features;
}

SFMConfig small_config(std::size_t channels = 4) {
  SFMConfig cfg;
  cfg.channels = channels;
  cfg.kernels = {3, 3};
  cfg.dilations = {1, 2};
  return cfg;
}

ParamStore<double> module_store(const SFMConfig& cfg, std::uint64_t seed, const std::string& prefix = "m") {
  nn::ParamSpecList specs;
  declare_sfm_module<3>(specs, prefix, cfg);
  auto store = nn::instantiate<double>(specs, seed);
  Rng rng(seed + 1);
  oracle::jitter_params(store, rng);
  return store;
}

void fill(ParamStore<double>& store, const std::string& name, double v) {
  auto& d = store.at(name).data;
  std::fill(d.begin(), d.end(), v);
}

Body<3> module_body(const SFMConfig& cfg, const std::string& prefix = "m") {
  return [cfg, prefix](Context<double>& ctx, const SparseVar<3>& x) { return sfm_module<double, 3>(ctx, prefix, cfg, x); };
}

TEST(Erf, TableFiveRows) {
  struct Row {
    std::vector<int> d;
    int voxels;
  };
  for (const Row& row : {Row{{1, 3}, 9}, Row{{1, 3, 5}, 19}, Row{{1, 5, 9}, 31}, Row{{1, 3, 5, 7}, 33},
                         Row{{1, 3, 5, 7, 9}, 51}}) {
    std::vector<int> k(row.d.size(), 3);
    auto rf = effective_receptive_field(k, row.d, 0.1);
    EXPECT_EQ(rf.voxels, row.voxels);
    EXPECT_EQ(std::llround(rf.meters * 1000), row.voxels * 100);
  }
  EXPECT_EQ(effective_receptive_field({3}, {1}).voxels, 3);
  auto waymo = effective_receptive_field({3, 5, 3, 5}, {1, 1, 3, 3}, 0.08);
  EXPECT_EQ(waymo.voxels, 25);
  EXPECT_EQ(std::llround(waymo.meters * 1000), 2000);
}

TEST(Config, Validation) {
  SFMConfig cfg;
  cfg.kernels = {3, 4};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.kernels = {3};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.kernels = {};
  cfg.dilations = {};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(InputProjection, ZeroWeightsGiveBiases) {
  auto cfg = small_config(3);
  auto store = module_store(cfg, 1);
  fill(store, "m.in_proj.weight", 0);
  Rng rng(2);
  auto x = random_dense<double>(rng, 5, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto p = input_projection(ctx, "m", cfg, tape.leaf(x));
  auto b = store.at("m.in_proj.bias").data;
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(tape.value(p.q)(r, c), b[c]);
      EXPECT_EQ(tape.value(p.f0)(r, c), b[3 + c]);
    }
    for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(tape.value(p.gates)(r, l), b[6 + l]);
  }
}

TEST(InputProjection, IdentityExtendedSplit) {
  SFMConfig cfg;
  cfg.channels = 2;
  cfg.kernels = {3};
  cfg.dilations = {1};
  auto store = module_store(cfg, 3);
  // Columns: q <- (x0, x1), f0 <- (x1, x0), gate <- x0.
  store.at("m.in_proj.weight").data = {1, 0, 0, 1, 1, 0, 1, 1, 0, 0};
  fill(store, "m.in_proj.bias", 0);
  Dense<double> x(2, 2, std::vector<double>{1, 2, 3, 4});
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto p = input_projection(ctx, "m", cfg, tape.leaf(x));
  EXPECT_EQ(tape.value(p.q), x);
  EXPECT_EQ(tape.value(p.f0), Dense<double>(2, 2, std::vector<double>{2, 1, 4, 3}));
  EXPECT_EQ(tape.value(p.gates), Dense<double>(2, 1, std::vector<double>{1, 3}));
}

TEST(InputProjection, SliceEquivalence) {
  auto cfg = small_config(4);
  auto store = module_store(cfg, 4);
  Rng rng(5);
  auto x = random_dense<double>(rng, 6, 4);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto p = input_projection(ctx, "m", cfg, tape.leaf(x));
  auto w = store.at("m.in_proj.weight").as_dense();
  auto b = store.at("m.in_proj.bias").as_dense();
  auto slice = [&](std::size_t begin, std::size_t end) {
    Dense<double> ws(4, end - begin), bs(1, end - begin);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = begin; j < end; ++j) ws(i, j - begin) = w(i, j);
    for (std::size_t j = begin; j < end; ++j) bs[j - begin] = b[j];
    auto out = oracle::naive_matmul(x, ws);
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += bs[j];
    return out;
  };
  EXPECT_LT(oracle::rel_err(tape.value(p.q), slice(0, 4)), 1e-14);
  EXPECT_LT(oracle::rel_err(tape.value(p.f0), slice(4, 8)), 1e-14);
  EXPECT_LT(oracle::rel_err(tape.value(p.gates), slice(8, 10)), 1e-14);
}

TEST(InputProjection, ChannelMismatch) {
  auto cfg = small_config(4);
  auto store = module_store(cfg, 6);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  try {
    input_projection(ctx, "m", cfg, tape.leaf(Dense<double>(2, 3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(ContextLevels, IdentityCenterKernel) {
  SFMConfig cfg;
  cfg.channels = 3;
  cfg.kernels = {3};
  cfg.dilations = {1};
  auto store = module_store(cfg, 7);
  fill(store, "m.level1.weight", 0);
  fill(store, "m.level1.bias", 0);
  auto& w = store.at("m.level1.weight").data;
  for (std::size_t c = 0; c < 3; ++c) w[(13 * 3 + c) * 3 + c] = 1;
  Rng rng(8);
  auto t = random_sparse<double, 3>(rng, {5, 5, 5}, 0.4, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto x = ctx.input(t);
  auto levels = context_levels<double, 3>(ctx, "m", cfg, x);
  ASSERT_EQ(levels.size(), 1u);
  for (std::size_t i = 0; i < t.features.size(); ++i)
    EXPECT_EQ(tape.value(levels[0])[i], nn::gelu(t.features[i]));
}

TEST(ContextLevels, TwoVoxelHandComposition) {
  auto cfg = small_config(2);
  auto store = module_store(cfg, 9);
  Rng rng(10);
  SparseTensor<double, 3> t{{{0, {1, 1, 1}}, {0, {2, 1, 1}}}, random_dense<double>(rng, 2, 2), {4, 4, 4}};
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto levels = context_levels<double, 3>(ctx, "m", cfg, ctx.input(t));
  // Level 1 (k3, d1): the two voxels see each other through offsets (+1,0,0) / (-1,0,0),
  // slots 22 and 4. Level 2 (k3, d2): no neighbour at distance 2, center only.
  auto w1 = store.at("m.level1.weight").as_dense(), b1 = store.at("m.level1.bias").as_dense();
  auto w2 = store.at("m.level2.weight").as_dense(), b2 = store.at("m.level2.bias").as_dense();
  Dense<double> f1(2, 2), f2(2, 2);
  for (std::size_t r = 0; r < 2; ++r) {
    const std::size_t other = 1 - r, slot = r == 0 ? 22 : 4;
    for (std::size_t c = 0; c < 2; ++c) {
      double s = b1[c];
      for (std::size_t ci = 0; ci < 2; ++ci)
        s += t.features(r, ci) * w1(13 * 2 + ci, c) + t.features(other, ci) * w1(slot * 2 + ci, c);
      f1(r, c) = oracle::gelu_ref(s);
    }
  }
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double s = b2[c];
      for (std::size_t ci = 0; ci < 2; ++ci) s += f1(r, ci) * w2(13 * 2 + ci, c);
      f2(r, c) = oracle::gelu_ref(s);
    }
  EXPECT_LT(oracle::rel_err(tape.value(levels[0]), f1), 1e-14);
  EXPECT_LT(oracle::rel_err(tape.value(levels[1]), f2), 1e-14);
}

TEST(AggregateContext, TrivialCases) {
  SFMConfig cfg;
  cfg.channels = 3;
  cfg.kernels = {3};
  cfg.dilations = {1};
  auto store = module_store(cfg, 11);
  store.at("m.h.weight").data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  fill(store, "m.h.bias", 0);
  Rng rng(12);
  auto f1 = random_dense<double>(rng, 4, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto ones = tape.leaf(Dense<double>(4, 1, 1.0));
  EXPECT_EQ(tape.value(aggregate_context(ctx, "m", {tape.leaf(f1)}, ones)), f1);

  auto store2 = module_store(cfg, 13);
  GradTape<double> tape2(false);
  Context<double> ctx2(tape2, store2);
  auto out = tape2.value(aggregate_context(ctx2, "m", {tape2.leaf(f1)}, tape2.leaf(Dense<double>(4, 1))));
  auto hb = store2.at("m.h.bias").data;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(r, c), hb[c]);
}

TEST(AggregateContext, RandomThreeLevelsMatchLoop) {
  SFMConfig cfg;
  cfg.channels = 5;
  cfg.kernels = {3, 3, 3};
  cfg.dilations = {1, 2, 3};
  auto store = module_store(cfg, 14);
  Rng rng(15);
  std::vector<Dense<double>> f;
  for (int l = 0; l < 3; ++l) f.push_back(random_dense<double>(rng, 7, 5));
  auto g = random_dense<double>(rng, 7, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  std::vector<nn::Var> vars;
  for (auto& d : f) vars.push_back(tape.leaf(d));
  auto out = tape.value(aggregate_context(ctx, "m", vars, tape.leaf(g)));
  Dense<double> acc(7, 5);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t l = 0; l < 3; ++l) acc(r, c) += f[l](r, c) * g(r, l);
  EXPECT_LT(oracle::rel_err(out, oracle::linear_ref(acc, store, "m.h")), 1e-6);
  EXPECT_THROW(aggregate_context(ctx, "m", {vars[0]}, tape.leaf(g)), Error);
}

TEST(Modulate, TrivialAndRandom) {
  auto cfg = small_config();
  auto store = module_store(cfg, 16);
  Rng rng(17);
  auto q = random_dense<double>(rng, 3, 4), c = random_dense<double>(rng, 3, 4);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  EXPECT_EQ(tape.value(modulate(ctx, tape.leaf(q), tape.leaf(Dense<double>(3, 4, 1.0)))), q);
  EXPECT_EQ(tape.value(modulate(ctx, tape.leaf(Dense<double>(3, 4)), tape.leaf(c))), Dense<double>(3, 4));
  auto z = tape.value(modulate(ctx, tape.leaf(q), tape.leaf(c)));
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], q[i] * c[i]);
  EXPECT_THROW(modulate(ctx, tape.leaf(q), tape.leaf(Dense<double>(3, 2))), Error);
}

TEST(SfmModule, EmptyInput) {
  auto cfg = small_config();
  auto store = module_store(cfg, 18);
  SparseTensor<double, 3> t{{}, Dense<double>(0, 4), {4, 4, 4}};
  auto out = sfm_module<double, 3>(t, cfg, store, "m");
  EXPECT_EQ(out.size(), 0u);
  EXPECT_EQ(out.features.cols(), 4u);
}

TEST(SfmModule, IsolatedVoxelClosedForm) {
  auto cfg = small_config(2);
  auto store = module_store(cfg, 19);
  Rng rng(20);
  SparseTensor<double, 3> t{{{0, {3, 3, 3}}}, random_dense<double>(rng, 1, 2), {7, 7, 7}};
  auto out = sfm_module<double, 3>(t, cfg, store, "m").features;
  // Only center weights act: f_l = gelu(f_{l-1} W_l[center] + b_l).
  auto proj = oracle::linear_ref(t.features, store, "m.in_proj");
  Dense<double> f(1, 2, std::vector<double>{proj[2], proj[3]}), acc(1, 2);
  for (int l = 1; l <= 2; ++l) {
    auto w = store.at("m.level" + std::to_string(l) + ".weight").as_dense();
    auto b = store.at("m.level" + std::to_string(l) + ".bias").as_dense();
    Dense<double> next(1, 2);
    for (std::size_t c = 0; c < 2; ++c)
      next[c] = oracle::gelu_ref(b[c] + f[0] * w(26, c) + f[1] * w(27, c));
    f = next;
    for (std::size_t c = 0; c < 2; ++c) acc[c] += f[c] * proj[3 + l];
  }
  auto ctx = oracle::linear_ref(acc, store, "m.h");
  EXPECT_NEAR(out[0], proj[0] * ctx[0], 1e-14);
  EXPECT_NEAR(out[1], proj[1] * ctx[1], 1e-14);
}

class SfmRandom : public ::testing::TestWithParam<int> {
 protected:
  std::uint64_t seed() const { return 3000 + static_cast<std::uint64_t>(GetParam()); }

  // Roughly 20-30 active voxels on a 6^3 grid.
  SparseTensor<double, 3> scene(Rng& rng, std::size_t channels) {
    return random_sparse<double, 3>(rng, {6, 6, 6}, 0.12, channels);
  }
};

TEST_P(SfmRandom, ModuleMatchesStepwiseOracle) {
  Rng rng(seed());
  auto cfg = small_config();
  cfg.gate = static_cast<GateMode>(GetParam() % 3);
  auto store = module_store(cfg, seed());
  auto t = scene(rng, 4);
  EXPECT_LT(oracle::rel_err(run<3>(t, store, module_body(cfg)), oracle::sfm_module_ref<3>(t, cfg, store, "m")), 1e-12);
}

TEST_P(SfmRandom, ModuleGradcheck) {
  Rng rng(seed());
  auto cfg = small_config();
  cfg.gate = static_cast<GateMode>(GetParam() % 3);
  auto store = module_store(cfg, seed());
  auto t = scene(rng, 4);
  auto active = t.active_set();
  auto body = module_body(cfg);
  EXPECT_LT(nn::vjp_check([&](GradTape<double>& tape, nn::Var in) {
              Context<double> ctx(tape, store);
              return body(ctx, SparseVar<3>{active, in}).features;
            }, t.features, seed()),
            1e-4);
  for (std::string name : {"m.in_proj.weight", "m.level1.weight", "m.level2.bias", "m.h.weight"}) {
    EXPECT_LT(nn::vjp_check([&](GradTape<double>& tape, nn::Var in) {
                Context<double> ctx(tape, store);
                ctx.bind(name, in);
                return body(ctx, SparseVar<3>{active, tape.leaf(t.features)}).features;
              }, store.at(name).as_dense(), seed(), {24, 1e-5}),
              1e-4)
        << name;
  }
}

TEST_P(SfmRandom, BlockMatchesOracleAndGradcheck) {
  Rng rng(seed());
  auto cfg = small_config();
  nn::ParamSpecList specs;
  declare_sfm_block<3>(specs, "b", cfg);
  auto store = nn::instantiate<double>(specs, seed());
  oracle::jitter_params(store, rng);
  auto t = scene(rng, 4);
  Body<3> body = [&](Context<double>& ctx, const SparseVar<3>& x) { return sfm_block<double, 3>(ctx, "b", cfg, x); };
  EXPECT_LT(oracle::rel_err(run<3>(t, store, body), oracle::sfm_block_ref<3>(t, cfg, store, "b")), 1e-12);
  auto active = t.active_set();
  EXPECT_LT(nn::vjp_check([&](GradTape<double>& tape, nn::Var in) {
              Context<double> ctx(tape, store);
              return body(ctx, SparseVar<3>{active, in}).features;
            }, t.features, seed()),
            1e-4);
}

TEST_P(SfmRandom, SrbMatchesOracleAndGradcheck) {
  Rng rng(seed());
  nn::ParamSpecList specs;
  declare_srb_block<3>(specs, "s", 3);
  auto store = nn::instantiate<double>(specs, seed());
  oracle::jitter_params(store, rng);
  for (auto name : {"s.bn1.running_mean", "s.bn2.running_mean"})
    for (auto& v : store.at(name).data) v = rng.uniform(-0.5, 0.5);
  for (auto name : {"s.bn1.running_var", "s.bn2.running_var"})
    for (auto& v : store.at(name).data) v = rng.uniform(0.5, 2.0);
  auto t = scene(rng, 3);
  Body<3> body = [](Context<double>& ctx, const SparseVar<3>& x) { return srb_block<double, 3>(ctx, "s", x); };
  const auto mode = GetParam() % 2 == 0 ? nn::BnMode::Eval : nn::BnMode::Train;
  EXPECT_LT(oracle::rel_err(run<3>(t, store, body, mode), oracle::srb_ref<3>(t, store, "s", mode == nn::BnMode::Train)),
            1e-12);
  auto active = t.active_set();
  EXPECT_LT(nn::vjp_check([&](GradTape<double>& tape, nn::Var in) {
              Context<double> ctx(tape, store, mode);
              return body(ctx, SparseVar<3>{active, in}).features;
            }, t.features, seed()),
            1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SfmRandom, ::testing::Range(0, 20));

TEST(SfmBlock, ZeroMixerResidualIdentity) {
  auto cfg = small_config();
  nn::ParamSpecList specs;
  declare_sfm_block<3>(specs, "b", cfg);
  auto store = nn::instantiate<double>(specs, 21);
  fill(store, "b.mixer.h.weight", 0);
  fill(store, "b.mixer.h.bias", 0);
  // Zero MLP head and second LN bias make the second residual an identity too.
  fill(store, "b.mlp.fc2.weight", 0);
  fill(store, "b.mlp.fc2.bias", 0);
  Rng rng(22);
  auto t = random_sparse<double, 3>(rng, {5, 5, 5}, 0.3, 4);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto x = ctx.input(t);
  auto z = sfm_module<double, 3>(ctx, "b.mixer", cfg, x);
  EXPECT_EQ(tape.value(z.features), Dense<double>(t.size(), 4));
  EXPECT_EQ(run<3>(t, store, [&](Context<double>& c, const SparseVar<3>& v) { return sfm_block<double, 3>(c, "b", cfg, v); }),
            t.features);
}

TEST(Srb, ZeroConvsGiveRelu) {
  nn::ParamSpecList specs;
  declare_srb_block<3>(specs, "s", 3);
  auto store = nn::instantiate<double>(specs, 23);
  for (auto name : {"s.conv1.weight", "s.conv1.bias", "s.conv2.weight", "s.conv2.bias"}) fill(store, name, 0);
  Rng rng(24);
  auto t = random_sparse<double, 3>(rng, {5, 5, 5}, 0.3, 3);
  auto out = run<3>(t, store, [](Context<double>& c, const SparseVar<3>& v) { return srb_block<double, 3>(c, "s", v); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::max(t.features[i], 0.0));
}

TEST(Srb, TrainModeRecordsRunningStats) {
  nn::ParamSpecList specs;
  declare_srb_block<3>(specs, "s", 3);
  auto store = nn::instantiate<double>(specs, 25);
  Rng rng(26);
  auto t = random_sparse<double, 3>(rng, {5, 5, 5}, 0.4, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store, nn::BnMode::Train);
  srb_block<double, 3>(ctx, "s", ctx.input(t));
  ASSERT_EQ(ctx.running_updates().size(), 2u);
  nn::commit_running_stats(ctx, store);
  EXPECT_NE(store.at("s.bn1.running_mean").data, std::vector<double>(3, 0.0));
}

TEST(SfmModule, GateSelectivity) {
  SFMConfig cfg;
  cfg.channels = 3;
  cfg.kernels = {3, 3, 3};
  cfg.dilations = {1, 2, 3};
  auto store = module_store(cfg, 27);
  // Gate columns of the projection -> constant one-hot on level 1.
  auto& w = store.at("m.in_proj.weight").data;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t l = 0; l < 3; ++l) w[r * 9 + 6 + l] = 0;
  auto& b = store.at("m.in_proj.bias").data;
  b[6] = 1;
  b[7] = b[8] = 0;
  Rng rng(28);
  auto t = random_sparse<double, 3>(rng, {6, 6, 6}, 0.3, 3);
  auto before = run<3>(t, store, module_body(cfg));
  for (auto name : {"m.level2.weight", "m.level3.weight", "m.level3.bias"})
    for (auto& v : store.at(name).data) v += rng.uniform(-1, 1);
  EXPECT_EQ(run<3>(t, store, module_body(cfg)), before);
  for (auto& v : store.at("m.level1.weight").data) v += rng.uniform(-1, 1);
  EXPECT_NE(run<3>(t, store, module_body(cfg)), before);
}

TEST(SfmModule, InteractionBound) {
  SFMConfig cfg;
  cfg.channels = 2;
  cfg.kernels = {3, 5};
  cfg.dilations = {1, 2};
  auto store = module_store(cfg, 29);
  Rng rng(30);
  for (int trial = 0; trial < 10; ++trial) {
    auto t = random_sparse<double, 3>(rng, {9, 9, 9}, 0.05 + 0.1 * trial, 2);
    GradTape<double> tape(false);
    Context<double> ctx(tape, store);
    nn::InteractionCounter counter;
    ctx.counter = &counter;
    sfm_module<double, 3>(ctx, "m", cfg, ctx.input(t));
    const std::uint64_t n = t.size();
    EXPECT_LE(counter.conv_pairs, n * (27 + 125));
    EXPECT_GE(counter.conv_pairs, 2 * n);
    EXPECT_EQ(counter.gate, n * 2);
    EXPECT_EQ(counter.modulation, n);
  }
}

TEST(SfmModule, WorksIn2D) {
  auto cfg = small_config(3);
  nn::ParamSpecList specs;
  declare_sfm_module<2>(specs, "m", cfg);
  auto store = nn::instantiate<double>(specs, 31);
  Rng rng(32);
  oracle::jitter_params(store, rng);
  auto t = random_sparse<double, 2>(rng, {9, 9}, 0.3, 3);
  auto out = sfm_module<double, 2>(t, cfg, store, "m");
  EXPECT_EQ(out.coords, t.coords);
  EXPECT_LT(oracle::rel_err(out.features, oracle::sfm_module_ref<2>(t, cfg, store, "m")), 1e-12);
}

// Active sets are untouched by every same-resolution operator.
TEST(Sparsity, PreservedOnRandomScenes) {
  auto cfg = small_config(3);
  nn::ParamSpecList specs;
  declare_sfm_block<3>(specs, "b", cfg);
  declare_srb_block<3>(specs, "s", 3);
  nn::declare_conv(specs, "c", 27, 3, 3);
  auto store = nn::instantiate<double>(specs, 33);
  Rng rng(34);
  for (int scene = 0; scene < 100; ++scene) {
    auto t = random_sparse<double, 3>(rng, {static_cast<int>(3 + rng.below(6)), 6, 5}, 0.1 + 0.4 * rng.uniform(), 3,
                                      1 + static_cast<int>(rng.below(2)));
    GradTape<double> tape(false);
    Context<double> ctx(tape, store);
    auto x = ctx.input(t);
    auto a = nn::subm_conv<double, 3>(ctx, "c", x, KernelSpec<3>::cube(3, 2));
    auto m = sfm_module<double, 3>(ctx, "b.mixer", cfg, a);
    auto b = sfm_block<double, 3>(ctx, "b", cfg, m);
    auto s = srb_block<double, 3>(ctx, "s", b);
    for (const auto* v : {&a, &m, &b, &s}) EXPECT_EQ(ctx.output(*v).coords, t.coords);
  }
}

}  // namespace
}  // namespace focalvox::sfm
