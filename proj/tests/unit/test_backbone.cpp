// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "focalvox/backbone/network.hpp"
#include "focalvox/io/synthetic.hpp"
#include "oracles/oracles.hpp"
#include "oracles/sfm_oracle.hpp"

namespace focalvox::backbone {
namespace {

using nn::GradTape;
using nn::ParamStore;
using oracle::random_dense;
using oracle::random_sparse;

ParamStore<double> make_store(const nn::ParamSpecList& specs, std::uint64_t seed) {
  auto store = nn::instantiate<double>(specs, seed);
  Rng rng(seed + 99);
  oracle::jitter_params(store, rng);
  return store;
}

TEST(Stage, SrbOnlyWithZeroConvsIsRelu) {
  StageConfig cfg{0, 1, 3, {3, 3}, {1, 2}, 2.0, sfm::GateMode::Raw};
  nn::ParamSpecList specs;
  declare_stage<3>(specs, "st", cfg);
  auto store = nn::instantiate<double>(specs, 1);
  for (auto name : {"st.srb1.conv1.weight", "st.srb1.conv2.weight"})
    std::fill(store.at(name).data.begin(), store.at(name).data.end(), 0.0);
  Rng rng(2);
  auto t = random_sparse<double, 3>(rng, {6, 6, 6}, 0.3, 3);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto out = ctx.output(run_stage<double, 3>(ctx, "st", cfg, ctx.input(t)));
  for (std::size_t i = 0; i < out.features.size(); ++i) EXPECT_EQ(out.features[i], std::max(t.features[i], 0.0));
}

TEST(Stage, SingleSfmEqualsBareBlock) {
  StageConfig cfg{1, 0, 4, {3, 3}, {1, 2}, 2.0, sfm::GateMode::Raw};
  nn::ParamSpecList specs;
  declare_stage<3>(specs, "st", cfg);
  auto store = make_store(specs, 3);
  Rng rng(4);
  auto t = random_sparse<double, 3>(rng, {6, 6, 6}, 0.3, 4);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto x = ctx.input(t);
  auto a = ctx.output(run_stage<double, 3>(ctx, "st", cfg, x));
  auto b = ctx.output(sfm::sfm_block<double, 3>(ctx, "st.sfm1", cfg.sfm(), x));
  EXPECT_EQ(a.features, b.features);
}

TEST(Stage, MatchesBlockByBlockComposition) {
  StageConfig cfg{2, 2, 4, {3, 3}, {1, 2}, 2.0, sfm::GateMode::Raw};
  nn::ParamSpecList specs;
  declare_stage<3>(specs, "st", cfg);
  auto store = make_store(specs, 5);
  Rng rng(6);
  auto t = random_sparse<double, 3>(rng, {7, 7, 5}, 0.25, 4);
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto out = ctx.output(run_stage<double, 3>(ctx, "st", cfg, ctx.input(t)));
  auto ref = t;
  for (const char* step : {"sfm1", "srb1", "srb2", "sfm2", "srb3", "srb4"}) {
    std::string p = std::string("st.") + step;
    ref.features = step[1] == 'f' ? oracle::sfm_block_ref<3>(ref, cfg.sfm(), store, p) : oracle::srb_ref<3>(ref, store, p);
  }
  EXPECT_EQ(out.coords, t.coords);
  EXPECT_LT(oracle::rel_err(out.features, ref.features), 1e-11);
}

nn::ParamStore<double> downsample_store(std::size_t cin, std::size_t cout, std::uint64_t seed) {
  nn::ParamSpecList specs;
  declare_downsample(specs, "d", cin, cout);
  return make_store(specs, seed);
}

TEST(Downsample, SingleVoxel) {
  auto store = downsample_store(2, 3, 7);
  SparseTensor<double, 3> t{{{0, {5, 5, 5}}}, Dense<double>(1, 2, 1.0), {11, 11, 11}};
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto y = ctx.output(downsample(ctx, "d", ctx.input(t)));
  std::vector<VoxelCoord<3>> expected;
  for (int i : {2, 3})
    for (int j : {2, 3})
      for (int k : {2, 3}) expected.push_back({0, {i, j, k}});
  EXPECT_EQ(y.coords, expected);
  EXPECT_EQ(y.features.cols(), 3u);
  for (double v : y.features.values()) EXPECT_GE(v, 0.0);
}

TEST(Downsample, EmptyInEvalMode) {
  auto store = downsample_store(2, 3, 8);
  SparseTensor<double, 3> t{{}, Dense<double>(0, 2), {8, 8, 8}};
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  EXPECT_EQ(ctx.output(downsample(ctx, "d", ctx.input(t))).size(), 0u);
}

TEST(Downsample, TwoVoxelsShareOutput) {
  auto store = downsample_store(2, 2, 9);
  Rng rng(10);
  SparseTensor<double, 3> t{{{0, {3, 4, 4}}, {0, {4, 4, 4}}}, random_dense<double>(rng, 2, 2), {9, 9, 9}};
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto conv = ctx.output(nn::regular_conv<double, 3>(ctx, "d.conv", ctx.input(t), downsample_spec()));
  // (4,4,4) reaches only output (2,2,2) through raw offset (1,1,1); (3,4,4)
  // reaches x in {1, 2}: output (2,2,2) through raw offset (0,1,1).
  EXPECT_EQ(conv.coords, (std::vector<VoxelCoord<3>>{{0, {1, 2, 2}}, {0, {2, 2, 2}}}));
  auto w = store.at("d.conv.weight").as_dense();
  auto b = store.at("d.conv.bias").as_dense();
  const std::size_t slot_a = 13, slot_b = 4;  // raw (1,1,1) and (0,1,1)
  for (std::size_t c = 0; c < 2; ++c) {
    double e = b[c];
    for (std::size_t ci = 0; ci < 2; ++ci) e += t.features(1, ci) * w(slot_a * 2 + ci, c) + t.features(0, ci) * w(slot_b * 2 + ci, c);
    EXPECT_NEAR(conv.features(1, c), e, 1e-14);
  }
}

TEST(Downsample, CoordinateLaw) {
  auto store = downsample_store(1, 1, 11);
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_sparse<double, 3>(rng, {static_cast<int>(4 + rng.below(8)), 7, 6}, 0.05 + 0.3 * rng.uniform(), 1);
    GradTape<double> tape(false);
    Context<double> ctx(tape, store);
    auto y = ctx.output(downsample(ctx, "d", ctx.input(t)));
    std::set<VoxelCoord<3>> expected;
    for (const auto& c : t.coords) {
      // Outputs j with 2j - 1 <= i <= 2j + 1 per axis.
      std::vector<int> js[3];
      for (int d = 0; d < 3; ++d)
        for (int j = (c.ijk[d] - 1 + 1) / 2; 2 * j - 1 <= c.ijk[d]; ++j)
          if (2 * j + 1 >= c.ijk[d]) js[d].push_back(j);
      for (int a : js[0])
        for (int b : js[1])
          for (int e : js[2]) expected.insert({c.batch, {a, b, e}});
    }
    EXPECT_EQ(std::set<VoxelCoord<3>>(y.coords.begin(), y.coords.end()), expected);
  }
}

nn::ParamStore<double> bev_store(std::size_t cin, std::size_t cout, std::uint64_t seed) {
  nn::ParamSpecList specs;
  declare_bev(specs, "bev", cin, cout);
  return make_store(specs, seed);
}

TEST(Bev, SingleVoxelAndSharedColumn) {
  auto store = bev_store(3, 4, 13);
  Rng rng(14);
  SparseTensor<double, 3> one{{{0, {2, 3, 1}}}, random_dense<double>(rng, 1, 3), {5, 5, 4}};
  GradTape<double> tape(false);
  Context<double> ctx(tape, store);
  auto cell = ctx.output(bev_compress(ctx, "bev", ctx.input(one)));
  EXPECT_EQ(cell.coords, (std::vector<VoxelCoord<2>>{{0, {2, 3}}}));
  EXPECT_EQ(cell.spatial_shape, (Extent<2>{5, 5}));
  auto ref = oracle::layer_norm_ref(oracle::linear_ref(one.features, store, "bev.linear"), store, "bev.norm");
  EXPECT_LT(oracle::rel_err(cell.features, ref), 1e-14);

  SparseTensor<double, 3> two{{{0, {2, 3, 0}}, {0, {2, 3, 3}}}, random_dense<double>(rng, 2, 3), {5, 5, 4}};
  auto col = ctx.output(bev_compress(ctx, "bev", ctx.input(two)));
  ASSERT_EQ(col.size(), 1u);
  Dense<double> sum(1, 3);
  for (std::size_t c = 0; c < 3; ++c) sum[c] = two.features(0, c) + two.features(1, c);
  EXPECT_LT(oracle::rel_err(col.features,
                            oracle::layer_norm_ref(oracle::linear_ref(sum, store, "bev.linear"), store, "bev.norm")),
            1e-14);
}

TEST(Bev, MatchesPerColumnLoop) {
  auto store = bev_store(3, 5, 15);
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    auto t = random_sparse<double, 3>(rng, {6, 5, 4}, 0.3, 3, 2);
    std::map<VoxelCoord<2>, std::vector<double>> columns;
    for (std::size_t r = 0; r < t.size(); ++r) {
      auto& acc = columns[{t.coords[r].batch, {t.coords[r].ijk[0], t.coords[r].ijk[1]}}];
      acc.resize(3, 0.0);
      for (std::size_t c = 0; c < 3; ++c) acc[c] += t.features(r, c);
    }
    Dense<double> summed(columns.size(), 3);
    std::vector<VoxelCoord<2>> cells;
    for (const auto& [cell, acc] : columns) {
      for (std::size_t c = 0; c < 3; ++c) summed(cells.size(), c) = acc[c];
      cells.push_back(cell);
    }
    GradTape<double> tape(false);
    Context<double> ctx(tape, store);
    auto out = ctx.output(bev_compress(ctx, "bev", ctx.input(t)));
    EXPECT_EQ(out.coords, cells);
    EXPECT_LT(oracle::rel_err(out.features,
                              oracle::layer_norm_ref(oracle::linear_ref(summed, store, "bev.linear"), store, "bev.norm")),
              1e-12);
  }
}

TEST(ParamCount, ClosedForms) {
  nn::ParamSpecList lin;
  nn::declare_linear(lin, "l", 2, 3);
  EXPECT_EQ(nn::param_count(lin), 9u);

  sfm::SFMConfig cfg;
  cfg.channels = 4;
  cfg.kernels = {3, 3};
  cfg.dilations = {1, 1};
  nn::ParamSpecList module;
  sfm::declare_sfm_module<3>(module, "m", cfg);
  EXPECT_EQ(nn::param_count(module), std::size_t{4 * (8 + 2) + 10 + 2 * (27 * 16 + 4) + (16 + 4)});
}

TEST(ParamCount, TinyPresetMatchesStore) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 1);
  EXPECT_EQ(param_count(cfg), store.scalar_count(nn::ParamKind::Parameter));
  std::size_t walked = 0;
  for (const auto& [name, rec] : store.entries())
    if (name.find("running_") == std::string::npos) walked += rec.numel();
  EXPECT_EQ(param_count(cfg), walked);
}

TEST(Presets, FocalSettings) {
  auto argo = argoverse2_like_preset();
  auto waymo = waymo_like_preset();
  for (const auto& s : argo.stages) {
    EXPECT_EQ(s.kernels, (std::vector<int>{3, 3, 3, 3}));
    EXPECT_EQ(s.dilations, (std::vector<int>{1, 3, 5, 7}));
  }
  for (const auto& s : waymo.stages) {
    EXPECT_EQ(s.kernels, (std::vector<int>{3, 5, 3, 5}));
    EXPECT_EQ(s.dilations, (std::vector<int>{1, 1, 3, 3}));
  }
  EXPECT_EQ(argo.stages[3].n_sfm, 4u);
  EXPECT_EQ(waymo.backbone2d.n_srb, 6u);
  for (const auto& name : {"tiny", "argoverse2-like", "waymo-like"}) EXPECT_NO_THROW(preset(name).validate()) << name;
  EXPECT_THROW(preset("huge"), Error);
  EXPECT_EQ(tiny_preset().voxelizer.grid_shape(), (Extent<3>{64, 64, 16}));
  EXPECT_EQ(waymo.voxelizer.grid_shape(), (Extent<3>{1872, 1872, 40}));
}

TEST(Config, ValidationErrors) {
  auto cfg = tiny_preset();
  cfg.downsample_channels[1] = 65;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_preset();
  cfg.stages[2].n_sfm = 0;
  cfg.stages[2].n_srb = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_preset();
  cfg.voxelizer.range_max[0] = 12.85;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_preset();
  cfg.bev_channels = 64;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Forward, SinglePoint) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 3);
  // Voxel (32, 32, 8): even indices stay on the stride-2 lattice, so every
  // downsample maps it to exactly one site.
  io::PointCloud cloud{{{6.5, 6.5, 1.7, 0.5}}};
  auto out = sfmnet_forward(cloud, cfg, store);
  EXPECT_EQ(out.bev.size(), 1u);
  EXPECT_EQ(out.logits.rows(), 1u);
  EXPECT_EQ(out.logits.cols(), kProbeLogits);
  EXPECT_TRUE(out.logits.all_finite());
  EXPECT_TRUE(out.bev.features.all_finite());
}

TEST(Forward, EmptyScene) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 3);
  io::PointCloud outside{{{-1, -1, -1, 0}}};
  try {
    sfmnet_forward(outside, cfg, store);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyScene);
  }
}

TEST(Forward, StageSparsityAndColumnConservation) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 4);
  auto cloud = io::synthetic_scene(600, 5, cfg.voxelizer);
  auto voxels = io::voxelize(cloud, cfg.voxelizer);
  SparseTensor<float, 3> input{voxels.coords, voxels.features.cast<float>(), voxels.spatial_shape};
  GradTape<float> tape(false);
  Context<float> ctx(tape, store);
  auto trace = sfmnet_forward(ctx, cfg, input);
  EXPECT_EQ(trace.stages[0].active->coords(), input.coords);
  std::set<VoxelCoord<2>> columns;
  for (const auto& c : trace.stages[3].active->coords()) columns.insert({c.batch, {c.ijk[0], c.ijk[1]}});
  EXPECT_EQ(trace.bev.size(), columns.size());
  EXPECT_EQ(trace.bev2d.active, trace.bev.active);
  EXPECT_EQ(trace.stages[1].active->shape(), (Extent<3>{33, 33, 9}));
}

TEST(Forward, DeterministicAcrossRunsAndWorkers) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 6);
  auto cloud = io::synthetic_scene(800, 7, cfg.voxelizer);
  set_max_workers(1);
  auto a = sfmnet_forward(cloud, cfg, store);
  set_max_workers(3);
  auto b = sfmnet_forward(cloud, cfg, store);
  auto c = sfmnet_forward(cloud, cfg, store);
  set_max_workers(0);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(b.logits, c.logits);
  EXPECT_EQ(a.bev.features, b.bev.features);
  EXPECT_EQ(a.bev.coords, b.bev.coords);
}

TEST(Forward, GradientReachesParameters) {
  auto cfg = tiny_preset();
  auto store = nn::instantiate<float>(declare_network(cfg), 8);
  auto cloud = io::synthetic_scene(2000, 9, cfg.voxelizer);
  auto voxels = io::voxelize(cloud, cfg.voxelizer);
  SparseTensor<float, 3> input{voxels.coords, voxels.features.cast<float>(), voxels.spatial_shape};
  GradTape<float> tape;
  Context<float> ctx(tape, store, nn::BnMode::Train);
  auto trace = sfmnet_forward(ctx, cfg, input);
  auto loss = nn::mean_all(tape, trace.logits);
  auto grads = tape.backward(loss, Dense<float>(1, 1, 1.0f));
  auto audit = audit_gradients(ctx, grads);
  EXPECT_EQ(audit.total, param_count(cfg));
  EXPECT_GT(audit.fraction(), 0.99) << audit.nonzero << " / " << audit.total;
  EXPECT_TRUE(audit.untouched.empty()) << audit.untouched.front();
  // 2 SRB convs per SRB (stages 1-4 and 2D: 5 SRBs) plus three downsample convs.
  EXPECT_EQ(audit.shadowed.size(), 13u);
}

TEST(Audit, FeedsBatchNorm) {
  auto store = nn::instantiate<float>(declare_network(tiny_preset()), 1);
  EXPECT_TRUE(feeds_batch_norm(store, "stage4.srb1.conv2.bias"));
  EXPECT_TRUE(feeds_batch_norm(store, "down2.conv.bias"));
  EXPECT_FALSE(feeds_batch_norm(store, "stage4.srb1.conv2.weight"));
  EXPECT_FALSE(feeds_batch_norm(store, "stage2.sfm1.mixer.level1.bias"));
  EXPECT_FALSE(feeds_batch_norm(store, "head.bias"));
}

}  // namespace
}  // namespace focalvox::backbone
