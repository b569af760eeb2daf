// Copyright 2026 The hdatrain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hdatrain/workloads.h"

#include <cmath>
#include <string>

#include "hdatrain/ops.h"

namespace hdatrain {
namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidConfig, what);
}

// Inference-style batch norm: per-channel scale then shift.
std::string ScaleShift(GraphBuilder& b, const std::string& x, int64_t channels,
                       const std::string& name) {
  auto gamma = b.Weight("p." + name + ".gamma", {channels, 1, 1});
  auto beta = b.Weight("p." + name + ".beta", {channels, 1, 1});
  auto scaled = b.Op(OpKind::kMul, name + ".scale", {x, gamma});
  return b.Op(OpKind::kAdd, name + ".shift", {scaled, beta});
}

std::string ConvBn(GraphBuilder& b, const std::string& x, int64_t cin, int64_t cout, int64_t kernel,
                   int64_t stride, const std::string& name) {
  auto w = b.Weight("p." + name + ".w", {cout, cin, kernel, kernel});
  auto y = b.Conv(x, w, stride, kernel / 2, name + ".conv");
  return ScaleShift(b, y, cout, name + ".bn");
}

// Layer norm over the last axis as primitives; gamma/beta are (D).
std::string LayerNorm(GraphBuilder& b, const std::string& x, const std::string& name) {
  const Shape shape = b.ShapeOf(x);
  const int64_t d = shape.back();
  Shape reduced = shape;
  reduced.back() = 1;
  auto sum = b.ReduceTo(x, reduced, name + ".sum");
  auto mean = b.Scale(sum, 1.0 / static_cast<double>(d), name + ".mean");
  auto centered = b.Op(OpKind::kSub, name + ".center", {x, mean});
  auto sq = b.Op(OpKind::kMul, name + ".sq", {centered, centered});
  auto sqsum = b.ReduceTo(sq, reduced, name + ".sqsum");
  auto var = b.Scale(sqsum, 1.0 / static_cast<double>(d), name + ".var");
  auto rstd = b.Op(OpKind::kRsqrt, name + ".rstd", {var}, {{"eps", 1e-5}});
  auto normed = b.Op(OpKind::kMul, name + ".norm", {centered, rstd});
  auto gamma = b.Weight("p." + name + ".gamma", {d});
  auto beta = b.Weight("p." + name + ".beta", {d});
  auto scaled = b.Op(OpKind::kMul, name + ".scale", {normed, gamma});
  return b.Op(OpKind::kAdd, name + ".shift", {scaled, beta});
}

}  // namespace

ComputationGraph BuildResnet(const ResnetConfig& cfg) {
  Require(cfg.num_blocks >= 1, "num_blocks must be >= 1");
  Require(cfg.base_channels >= 1, "base_channels must be >= 1");
  Require(cfg.num_classes >= 1, "num_classes must be >= 1");
  Require(cfg.input_shape.size() == 4, "input_shape must be (N,C,H,W)");
  for (int64_t d : cfg.input_shape) Require(d >= 1, "input dims must be >= 1");

  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward, cfg.element_bytes);
  auto x = b.Input("x", cfg.input_shape);
  int64_t channels = cfg.base_channels;
  auto y = ConvBn(b, x, cfg.input_shape[1], channels, 3, 1, "stem");
  y = b.Op(OpKind::kReLU, "stem.relu", {y});

  for (int blk = 0; blk < cfg.num_blocks; ++blk) {
    const std::string name = "block" + std::to_string(blk);
    const bool down = cfg.include_downsample && blk > 0 && blk % 2 == 0 && b.ShapeOf(y)[2] >= 2 &&
                      b.ShapeOf(y)[3] >= 2;
    const int64_t stride = down ? 2 : 1;
    const int64_t cout = down ? channels * 2 : channels;
    auto h = ConvBn(b, y, channels, cout, 3, stride, name + ".a");
    h = b.Op(OpKind::kReLU, name + ".a.relu", {h});
    h = ConvBn(b, h, cout, cout, 3, 1, name + ".b");
    std::string skip = y;
    if (down) skip = ConvBn(b, y, channels, cout, 1, stride, name + ".proj");
    auto sum = b.Op(OpKind::kAdd, name + ".residual", {h, skip});
    y = b.Op(OpKind::kReLU, name + ".relu", {sum});
    channels = cout;
  }

  const int64_t n = cfg.input_shape[0];
  auto pooled = b.Op(OpKind::kPool, "head.pool", {y});
  auto flat = b.Reshape(pooled, {n, channels}, "head.flatten");
  auto w = b.Weight("p.head.w", {channels, cfg.num_classes});
  auto bias = b.Weight("p.head.b", {cfg.num_classes});
  auto logits = b.Gemm(flat, w, "head.fc", bias);
  g.AddGraphOutput(logits);
  return g;
}

ComputationGraph BuildGpt(const GptConfig& cfg) {
  Require(cfg.num_layers >= 1, "num_layers must be >= 1");
  Require(cfg.d_model >= 1 && cfg.n_heads >= 1, "d_model and n_heads must be >= 1");
  Require(cfg.d_model % cfg.n_heads == 0, "d_model must be divisible by n_heads");
  Require(cfg.seq_len >= 1, "seq_len must be >= 1");
  Require(cfg.vocab_size >= 1 && cfg.ffn_multiplier >= 1 && cfg.batch >= 1,
          "vocab_size, ffn_multiplier and batch must be >= 1");

  const int64_t bsz = cfg.batch, s = cfg.seq_len, d = cfg.d_model;
  const int64_t heads = cfg.n_heads, dh = d / heads, ff = d * cfg.ffn_multiplier;

  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward, cfg.element_bytes);
  auto x = b.Input("x", {bsz, s, d});
  auto pos = b.Weight("p.pos", {s, d});
  auto h = b.Op(OpKind::kAdd, "embed.pos", {x, pos});

  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string name = "layer" + std::to_string(l);
    auto a = LayerNorm(b, h, name + ".ln1");
    auto proj = [&](const std::string& which, int64_t in, int64_t out, const std::string& src) {
      auto w = b.Weight("p." + name + "." + which + ".w", {in, out});
      auto bias = b.Weight("p." + name + "." + which + ".b", {out});
      return b.Gemm(src, w, name + "." + which, bias);
    };
    auto q = proj("q", d, d, a);
    auto k = proj("k", d, d, a);
    auto v = proj("v", d, d, a);
    auto split = [&](const std::string& t, std::vector<int64_t> perm, const std::string& tag) {
      auto r = b.Reshape(t, {bsz, s, heads, dh}, name + "." + tag + ".split");
      return b.Transpose(r, perm, name + "." + tag + ".heads");
    };
    auto qh = split(q, {0, 2, 1, 3}, "q");
    auto kt = split(k, {0, 2, 3, 1}, "k");
    auto vh = split(v, {0, 2, 1, 3}, "v");
    auto scores = b.Op(OpKind::kMatMul, name + ".scores", {qh, kt});
    scores = b.Scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)), name + ".scaled");
    auto probs = b.Op(OpKind::kSoftmax, name + ".softmax", {scores},
                      {{"causal", int64_t{cfg.causal ? 1 : 0}}});
    auto ctx = b.Op(OpKind::kMatMul, name + ".context", {probs, vh});
    ctx = b.Transpose(ctx, {0, 2, 1, 3}, name + ".merge");
    ctx = b.Reshape(ctx, {bsz, s, d}, name + ".concat");
    auto o = proj("o", d, d, ctx);
    h = b.Op(OpKind::kAdd, name + ".residual1", {h, o});

    auto a2 = LayerNorm(b, h, name + ".ln2");
    auto f = proj("ff1", d, ff, a2);
    f = b.Op(OpKind::kReLU, name + ".ff.relu", {f});
    f = proj("ff2", ff, d, f);
    h = b.Op(OpKind::kAdd, name + ".residual2", {h, f});
  }

  auto hn = LayerNorm(b, h, "head.ln");
  auto w = b.Weight("p.head.w", {d, cfg.vocab_size});
  auto logits = b.Gemm(hn, w, "head.logits");
  g.AddGraphOutput(logits);
  return g;
}

ComputationGraph BuildFusionChain(int length, int64_t channels, int64_t spatial) {
  Require(length >= 2, "fusion chain needs at least two stages");
  Require(channels >= 1 && spatial >= 1, "channels and spatial must be >= 1");
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto y = b.Input("x", {1, channels, spatial, spatial});
  for (int i = 0; i < length; ++i) {
    const std::string name = "stage" + std::to_string(i);
    auto w = b.Weight("p." + name + ".w", {channels, channels, 1, 1});
    y = b.Conv(y, w, 1, 0, name + ".conv");
    y = b.Op(OpKind::kReLU, name + ".relu", {y});
  }
  auto pooled = b.Op(OpKind::kPool, "head.pool", {y});
  auto flat = b.Reshape(pooled, {1, channels}, "head.flatten");
  auto w = b.Weight("p.head.w", {channels, 4});
  auto logits = b.Gemm(flat, w, "head.fc");
  g.AddGraphOutput(logits);
  return g;
}

ComputationGraph BuildCheckpointBlock(int64_t channels, int64_t spatial) {
  Require(channels >= 1 && spatial >= 1, "channels and spatial must be >= 1");
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto x = b.Input("x", {1, channels, spatial, spatial});
  auto conv = [&](const std::string& in, const std::string& name) {
    auto w = b.Weight("p." + name + ".w", {channels, channels, 3, 3});
    return b.Conv(in, w, 1, 1, name + ".conv");
  };
  auto a1 = b.Op(OpKind::kReLU, "op1.relu", {conv(x, "op1")});
  auto a2 = b.Op(OpKind::kReLU, "op2.relu", {conv(a1, "op2")});
  auto sum = b.Op(OpKind::kAdd, "op3.residual", {conv(a2, "op3"), a1});
  auto y = b.Op(OpKind::kReLU, "op3.relu", {sum});
  auto pooled = b.Op(OpKind::kPool, "head.pool", {y});
  auto flat = b.Reshape(pooled, {1, channels}, "head.flatten");
  auto w = b.Weight("p.head.w", {channels, 4});
  g.AddGraphOutput(b.Gemm(flat, w, "head.fc"));
  return g;
}

bool IsBuiltinWorkload(const std::string& name) {
  return name == "resnet-desk" || name == "resnet-tiny" || name == "resnet18-cifar" ||
         name == "gpt-desk" || name == "gpt-tiny" || name == "fusion-chain" ||
         name == "checkpoint-block";
}

ComputationGraph BuildBuiltinWorkload(const std::string& name) {
  if (name == "resnet-desk") return BuildResnet(ResnetConfig{});
  if (name == "resnet18-cifar") {
    ResnetConfig cfg;
    cfg.base_channels = 64;
    return BuildResnet(cfg);
  }
  if (name == "resnet-tiny") {
    ResnetConfig cfg;
    cfg.num_blocks = 2;
    cfg.base_channels = 4;
    cfg.input_shape = {1, 3, 8, 8};
    cfg.include_downsample = false;
    cfg.num_classes = 4;
    return BuildResnet(cfg);
  }
  if (name == "gpt-desk") return BuildGpt(GptConfig{});
  if (name == "gpt-tiny") {
    GptConfig cfg;
    cfg.num_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.seq_len = 8;
    cfg.vocab_size = 16;
    return BuildGpt(cfg);
  }
  if (name == "fusion-chain") return BuildFusionChain();
  if (name == "checkpoint-block") return BuildCheckpointBlock();
  throw Error(ErrorCode::kInvalidConfig, "unknown builtin workload '" + name + "'");
}

}  // namespace hdatrain
