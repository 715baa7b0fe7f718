// Copyright 2026 The chanprune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chanprune/importance.hpp"
#include "chanprune/masks.hpp"
#include "fixtures.hpp"
#include "finite_diff.hpp"
#include "params.hpp"

using namespace chanprune;
using namespace chanprune::testing;
using nlohmann::json;

namespace {

Tensor<double> matrix(std::int64_t n, std::int64_t c, std::vector<double> v) {
  return Tensor<double>({n, c}, std::move(v));
}

json small_cnn() {
  return manifest({2, 3, 6, 6}, {conv("a", "x", 4, 3), op("r", "relu", {"a"}), conv("b", "r", 5, 3),
                                 op("rb", "relu", {"b"}), op("gap", "global_avg_pool", {"rb"}), fc("fc", "gap", 3),
                                 op("out", "output", {"fc"})});
}

} // namespace

TEST(Reduction, GroupedConvSumsBlocks) {
  Layer l;
  l.kind = LayerKind::kConv;
  l.attrs.groups = 2;
  const auto map = grouped_slot_map(l, 4);
  EXPECT_EQ(map, (std::vector<std::int64_t>{0, 0, 1, 1}));
  const auto r = reduce_in_layer(matrix(1, 4, {1.0, 2.0, 3.0, 4.0}), map, 2);
  EXPECT_EQ(r.values(), (std::vector<double>{3.0, 7.0}));
}

TEST(Reduction, PlainAndDepthwiseAreIdentity) {
  Layer plain;
  plain.kind = LayerKind::kConv;
  EXPECT_EQ(grouped_slot_map(plain, 3), (std::vector<std::int64_t>{0, 1, 2}));
  Layer dw = plain;
  dw.attrs.groups = 3;
  EXPECT_EQ(grouped_slot_map(dw, 3), (std::vector<std::int64_t>{0, 1, 2}));
  const auto m = matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(reduce_in_layer(m, grouped_slot_map(dw, 3), 3).values(), m.values());
}

TEST(Reduction, CrossLayerSumsBeforeSquaring) {
  const auto u = matrix(2, 2, {1.0, -2.0, 0.5, 3.0});
  const auto v = matrix(2, 2, {2.0, 1.0, -0.5, 1.0});
  const std::vector<Tensor<double>> single{u};
  EXPECT_EQ(reduce_cross_layer(single).values(), u.values());
  const std::vector<Tensor<double>> both{u, v};
  EXPECT_EQ(reduce_cross_layer(both).values(), (std::vector<double>{3.0, -1.0, 0.0, 4.0}));
  const std::vector<Tensor<double>> bad{u, matrix(2, 3, {0, 0, 0, 0, 0, 0})};
  EXPECT_THROW(reduce_cross_layer(bad), Error);
}

TEST(Reduction, OpposedMembersCancel) {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const auto grp = static_cast<std::size_t>(t.group_of_layer[g.index_of("conv2")]);
  Tensor<double> u({3, 16});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  for (auto &x : u.values()) x = d(rng);
  Tensor<double> neg = u;
  for (auto &x : neg.values()) x = -x;
  const std::vector<Tensor<double>> pair{u, neg};
  FisherAccumulator acc(t);
  acc.accumulate(grp, reduce_cross_layer(pair));
  for (double s : acc.squares(grp)) EXPECT_EQ(s, 0.0);
  FisherAccumulator apart(t);
  apart.accumulate(grp, u);
  apart.accumulate(grp, neg);
  double total = 0.0;
  for (double s : apart.squares(grp)) total += s;
  EXPECT_GT(total, 0.0);
}

TEST(Accumulator, AdditiveAndResettable) {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const auto grp = static_cast<std::size_t>(t.group_of_layer[g.index_of("gconv3")]);
  const auto batch = matrix(2, 4, {1.0, -1.0, 2.0, 0.0, 3.0, 1.0, -2.0, 0.0});
  FisherAccumulator acc(t);
  acc.accumulate(grp, batch);
  const std::vector<double> once(acc.squares(grp).begin(), acc.squares(grp).end());
  EXPECT_EQ(once, (std::vector<double>{10.0, 2.0, 8.0, 0.0}));
  acc.accumulate(grp, Tensor<double>({2, 4}));
  EXPECT_EQ(std::vector<double>(acc.squares(grp).begin(), acc.squares(grp).end()), once);
  acc.accumulate(grp, batch);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(acc.squares(grp)[s], 2.0 * once[s]);
  EXPECT_EQ(std::vector<double>(acc.sums(grp).begin(), acc.sums(grp).end()),
            (std::vector<double>{8.0, 0.0, 0.0, 0.0}));
  acc.add_samples(4);
  EXPECT_EQ(acc.sample_count(), 4);
  acc.zeroize();
  EXPECT_EQ(acc.sample_count(), 0);
  for (std::size_t gi = 0; gi < t.size(); ++gi)
    for (double s : acc.squares(gi)) EXPECT_EQ(s, 0.0);
  EXPECT_THROW(acc.accumulate(grp, Tensor<double>({2, 5})), Error);
}

TEST(Accumulator, ScoresMarkDeadSlotsAndAddFirstOrderTerm) {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const auto grp = static_cast<std::size_t>(t.group_of_layer[g.index_of("gconv3")]);
  FisherAccumulator acc(t);
  acc.accumulate(grp, matrix(2, 4, {1.0, -1.0, 2.0, 0.5, 3.0, 1.0, -2.0, 0.5}));
  MaskSet masks = MaskSet::all_ones(t);
  masks.prune(grp, 1);
  const auto plain = acc.scores(masks);
  EXPECT_EQ(plain[grp][0], 10.0);
  EXPECT_TRUE(std::isinf(plain[grp][1]));
  EXPECT_EQ(plain[grp][2], 8.0);
  const auto with = acc.scores(masks, true);
  EXPECT_EQ(with[grp][0], 10.0 + 8.0);
  EXPECT_EQ(with[grp][2], 8.0);
  EXPECT_EQ(with[grp][3], 0.5 + 2.0);
}

TEST(Accumulator, ScalesQuadraticallyAndPermutesWithSlots) {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const auto grp = static_cast<std::size_t>(t.group_of_layer[g.index_of("gconv3")]);
  const auto base = matrix(2, 4, {1.0, -1.0, 2.0, 0.5, 3.0, 1.0, -2.0, 0.25});
  Tensor<double> scaled = base;
  for (auto &x : scaled.values()) x *= 3.0;
  Tensor<double> swapped = base;
  for (std::int64_t n = 0; n < 2; ++n) std::swap(swapped[n * 4 + 0], swapped[n * 4 + 2]);
  FisherAccumulator a(t), b(t), c(t);
  a.accumulate(grp, base);
  b.accumulate(grp, scaled);
  c.accumulate(grp, swapped);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_DOUBLE_EQ(b.squares(grp)[s], 9.0 * a.squares(grp)[s]);
    EXPECT_GE(a.squares(grp)[s], 0.0);
  }
  EXPECT_EQ(c.squares(grp)[0], a.squares(grp)[2]);
  EXPECT_EQ(c.squares(grp)[2], a.squares(grp)[0]);
}

TEST(MaskGrads, FcInputIsActivationTimesGradient) {
  const json m = manifest({3, 4, 1, 1}, {fc("f", "x", 3), op("out", "output", {"f"})});
  const CompGraph g = parse_graph(m);
  const auto params = busy_weights(g, 2).as<double>();
  const auto x = random_batch(g.shape("x"), 3, 3);
  const auto y = random_labels(3, 3, 4);
  const auto f = forward<double>(g, params, {}, x, y, Mode::kEval);
  const auto grads = backward<double>(g, params, f.tape);
  const auto smg = sample_mask_grads<double>(g, f.tape, grads.act_grads);
  const auto &mg = smg[g.index_of("f")];
  const auto &ag = grads.act_grads[g.index_of("f")];
  for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(mg[i], x[i] * ag[i]);
}

TEST(MaskGrads, PerSampleGradientsMatchFiniteDifferences) {
  const CompGraph g = parse_graph(small_cnn());
  const GroupTable t = build_groups(g);
  const auto params = busy_weights(g, 5).as<double>();
  const auto x = random_batch(g.shape("x"), 2, 6);
  const auto y = random_labels(2, 3, 7);
  auto masks = layer_input_masks<double>(g, t, MaskSet::all_ones(t));
  const auto f = forward<double>(g, params, masks, x, y, Mode::kEval);
  const auto grads = backward<double>(g, params, f.tape);
  const auto smg = sample_mask_grads<double>(g, f.tape, grads.act_grads);
  const auto wide_params = widen(params);
  const auto wide_masks = widen(masks);
  const auto wide_x = x.cast<long double>();
  for (const char *id : {"b", "fc"}) {
    const std::size_t k = g.index_of(id);
    for (std::size_t c = 0; c < masks[k].size(); ++c) {
      for (std::size_t n = 0; n < 2; ++n) {
        const double numeric = smooth_derivative([&](long double d) {
                                 auto m2 = wide_masks;
                                 m2[k][c] += d;
                                 return forward<long double>(g, wide_params, m2, wide_x, y, Mode::kEval)
                                     .tape.sample_losses[n];
                               }).value;
        const double analytic = smg[k][n * masks[k].size() + c];
        EXPECT_LT(relative_error(analytic, numeric, kFdFloor), kFdTol) << id << " c" << c << " n" << n;
      }
    }
  }
}

TEST(MaskGrads, SilentChannelScoresExactlyZero) {
  const CompGraph g = parse_graph(small_cnn());
  const GroupTable t = build_groups(g);
  WeightStore w = busy_weights(g, 8);
  auto &wa = w.at("a.weight");
  const std::int64_t per_out = wa.numel() / 4;
  for (std::int64_t i = 0; i < per_out; ++i) wa[2 * per_out + i] = 0.0f;
  w.at("a.bias")[2] = 0.0f;
  FisherAccumulator acc(t);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto x = random_batch(g.shape("x"), 2, 10 + s).cast<float>();
    const auto f = forward<float>(g, w.tensors(), layer_input_masks<float>(g, t, MaskSet::all_ones(t)), x,
                                  random_labels(2, 3, s), Mode::kTrain);
    accumulate_batch<float>(g, t, f.tape, backward<float>(g, w.tensors(), f.tape).act_grads, acc);
  }
  const auto grp = static_cast<std::size_t>(t.group_of_layer[g.index_of("b")]);
  EXPECT_EQ(acc.squares(grp)[2], 0.0);
  for (std::size_t s : {0u, 1u, 3u}) EXPECT_GT(acc.squares(grp)[s], 0.0);
}

TEST(MaskGrads, BatchAccumulationMatchesManualReduction) {
  const CompGraph g = reference_net();
  const GroupTable t = build_groups(g);
  const WeightStore w = busy_weights(g, 4);
  const auto x = random_batch(g.shape("data"), 3, 1).cast<float>();
  const auto f = forward<float>(g, w.tensors(), layer_input_masks<float>(g, t, MaskSet::all_ones(t)), x,
                                random_labels(3, 10, 2), Mode::kTrain);
  const auto ag = backward<float>(g, w.tensors(), f.tape).act_grads;
  FisherAccumulator acc(t);
  accumulate_batch<float>(g, t, f.tape, ag, acc);
  EXPECT_EQ(acc.sample_count(), 3);
  const auto smg = sample_mask_grads<float>(g, f.tape, ag);
  for (std::size_t gi = 0; gi < t.size(); ++gi) {
    const auto width = t.group(gi).width;
    std::vector<double> sum(static_cast<std::size_t>(3 * width), 0.0);
    for (auto k : t.group(gi).members) {
      const auto &mg = smg[k];
      const auto c = mg.dim(1);
      for (std::int64_t n = 0; n < 3; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
          sum[static_cast<std::size_t>(n * width + t.slot_of_input[k][static_cast<std::size_t>(ch)])] +=
              static_cast<double>(mg[static_cast<std::size_t>(n * c + ch)]);
    }
    for (std::int64_t s = 0; s < width; ++s) {
      double sq = 0.0;
      for (std::int64_t n = 0; n < 3; ++n) sq += sum[static_cast<std::size_t>(n * width + s)] * sum[static_cast<std::size_t>(n * width + s)];
      EXPECT_NEAR(acc.squares(gi)[static_cast<std::size_t>(s)], sq, 1e-9 * std::max(1.0, sq));
    }
  }
}
