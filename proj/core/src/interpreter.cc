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

#include "hdatrain/interpreter.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdatrain/ops.h"

namespace hdatrain {

TensorValue TensorValue::Zeros(const Shape& shape) {
  return {shape, std::vector<double>(static_cast<size_t>(NumElements(shape)), 0.0)};
}

TensorValue TensorValue::Of(const Shape& shape, std::vector<double> data) {
  if (static_cast<int64_t>(data.size()) != NumElements(shape)) {
    throw Error(ErrorCode::kShapeMismatch, "buffer length does not match shape");
  }
  return {shape, std::move(data)};
}

namespace {

using Vec = std::vector<double>;

// For each element of `out`, the flat index of the right-aligned broadcast
// source element of shape `in`.
std::vector<size_t> BroadcastMap(const Shape& out, const Shape& in) {
  const size_t rank = out.size();
  const size_t off = rank - in.size();
  std::vector<size_t> in_stride(rank, 0);
  size_t stride = 1;
  for (size_t i = in.size(); i-- > 0;) {
    in_stride[off + i] = in[i] == 1 ? 0 : stride;
    stride *= static_cast<size_t>(in[i]);
  }
  const size_t total = static_cast<size_t>(NumElements(out));
  std::vector<size_t> map(total);
  std::vector<int64_t> idx(rank, 0);
  size_t src = 0;
  for (size_t flat = 0; flat < total; ++flat) {
    map[flat] = src;
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        src += in_stride[d];
        break;
      }
      src -= in_stride[d] * static_cast<size_t>(out[d] - 1);
      idx[d] = 0;
    }
  }
  return map;
}

template <typename F>
Vec Binary(const TensorValue& a, const TensorValue& b, F f) {
  Vec out(a.data.size());
  if (a.shape == b.shape) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i], b.data[i]);
  } else {
    auto map = BroadcastMap(a.shape, b.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data[i], b.data[map[i]]);
  }
  return out;
}

Vec ConvForward(const TensorValue& x, const TensorValue& w, const TensorValue* bias,
                const Shape& os, int64_t s, int64_t p) {
  const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t K = w.shape[0], FY = w.shape[2], FX = w.shape[3];
  const int64_t OY = os[2], OX = os[3];
  Vec out(static_cast<size_t>(NumElements(os)), 0.0);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t k = 0; k < K; ++k) {
      double* o = &out[((n * K + k) * OY) * OX];
      for (int64_t c = 0; c < C; ++c) {
        const double* xi = &x.data[((n * C + c) * H) * W];
        for (int64_t fy = 0; fy < FY; ++fy) {
          for (int64_t fx = 0; fx < FX; ++fx) {
            const double wv = w.data[((k * C + c) * FY + fy) * FX + fx];
            for (int64_t oy = 0; oy < OY; ++oy) {
              const int64_t iy = oy * s + fy - p;
              if (iy < 0 || iy >= H) continue;
              for (int64_t ox = 0; ox < OX; ++ox) {
                const int64_t ix = ox * s + fx - p;
                if (ix < 0 || ix >= W) continue;
                o[oy * OX + ox] += wv * xi[iy * W + ix];
              }
            }
          }
        }
      }
      if (bias) {
        for (int64_t i = 0; i < OY * OX; ++i) o[i] += bias->data[k];
      }
    }
  }
  return out;
}

Vec ConvWeightGrad(const TensorValue& x, const TensorValue& dy, const Shape& ws, int64_t s,
                   int64_t p) {
  const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t K = dy.shape[1], OY = dy.shape[2], OX = dy.shape[3];
  const int64_t FY = ws[2], FX = ws[3];
  Vec out(static_cast<size_t>(NumElements(ws)), 0.0);
  for (int64_t k = 0; k < K; ++k) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t fy = 0; fy < FY; ++fy) {
        for (int64_t fx = 0; fx < FX; ++fx) {
          double acc = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double* xi = &x.data[((n * C + c) * H) * W];
            const double* g = &dy.data[((n * K + k) * OY) * OX];
            for (int64_t oy = 0; oy < OY; ++oy) {
              const int64_t iy = oy * s + fy - p;
              if (iy < 0 || iy >= H) continue;
              for (int64_t ox = 0; ox < OX; ++ox) {
                const int64_t ix = ox * s + fx - p;
                if (ix < 0 || ix >= W) continue;
                acc += g[oy * OX + ox] * xi[iy * W + ix];
              }
            }
          }
          out[((k * C + c) * FY + fy) * FX + fx] = acc;
        }
      }
    }
  }
  return out;
}

Vec ConvTransposeForward(const TensorValue& dy, const TensorValue& w, const Shape& os, int64_t s,
                         int64_t p) {
  const int64_t N = dy.shape[0], K = dy.shape[1], OY = dy.shape[2], OX = dy.shape[3];
  const int64_t C = w.shape[1], FY = w.shape[2], FX = w.shape[3];
  const int64_t H = os[2], W = os[3];
  Vec out(static_cast<size_t>(NumElements(os)), 0.0);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      double* o = &out[((n * C + c) * H) * W];
      for (int64_t k = 0; k < K; ++k) {
        const double* g = &dy.data[((n * K + k) * OY) * OX];
        for (int64_t fy = 0; fy < FY; ++fy) {
          for (int64_t fx = 0; fx < FX; ++fx) {
            const double wv = w.data[((k * C + c) * FY + fy) * FX + fx];
            for (int64_t oy = 0; oy < OY; ++oy) {
              const int64_t iy = oy * s + fy - p;
              if (iy < 0 || iy >= H) continue;
              for (int64_t ox = 0; ox < OX; ++ox) {
                const int64_t ix = ox * s + fx - p;
                if (ix < 0 || ix >= W) continue;
                o[iy * W + ix] += wv * g[oy * OX + ox];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// out(B,M,N) = a(B,M,K) x b(B,K,N); b_batch = 0 shares b across the batch.
Vec BatchedMatMul(const Vec& a, const Vec& b, int64_t B, int64_t M, int64_t N, int64_t K,
                  bool share_b) {
  Vec out(static_cast<size_t>(B * M * N), 0.0);
  for (int64_t bi = 0; bi < B; ++bi) {
    const double* A = &a[bi * M * K];
    const double* Bm = &b[share_b ? 0 : bi * K * N];
    double* O = &out[bi * M * N];
    for (int64_t m = 0; m < M; ++m) {
      for (int64_t k = 0; k < K; ++k) {
        const double av = A[m * K + k];
        for (int64_t n = 0; n < N; ++n) O[m * N + n] += av * Bm[k * N + n];
      }
    }
  }
  return out;
}

// Row-wise softmax over the last axis; causal rows only see columns <= row.
Vec SoftmaxRows(const TensorValue& x, bool causal) {
  const int64_t cols = x.shape.back();
  const int64_t rows = NumElements(x.shape) / cols;
  const int64_t square = x.shape.size() >= 2 ? x.shape[x.shape.size() - 2] : 1;
  Vec out(x.data.size(), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t limit = causal ? (r % square) + 1 : cols;
    const double* xi = &x.data[r * cols];
    double* o = &out[r * cols];
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < limit; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < limit; ++j) {
      o[j] = std::exp(xi[j] - mx);
      sum += o[j];
    }
    for (int64_t j = 0; j < limit; ++j) o[j] /= sum;
  }
  return out;
}

Vec TransposeData(const TensorValue& x, const std::vector<int64_t>& perm, const Shape& os) {
  const size_t rank = perm.size();
  std::vector<size_t> in_stride(rank);
  size_t stride = 1;
  for (size_t i = rank; i-- > 0;) {
    in_stride[i] = stride;
    stride *= static_cast<size_t>(x.shape[i]);
  }
  Vec out(x.data.size());
  std::vector<int64_t> idx(rank, 0);
  size_t src = 0;
  for (size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = x.data[src];
    for (size_t d = rank; d-- > 0;) {
      const size_t step = in_stride[perm[d]];
      if (++idx[d] < os[d]) {
        src += step;
        break;
      }
      src -= step * static_cast<size_t>(os[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

std::vector<TensorValue> RunNode(const OperatorNode& n, const std::vector<const TensorValue*>& in,
                                 const std::vector<Shape>& out_shapes) {
  const Shape& os = out_shapes[0];
  auto one = [&](Vec v) { return std::vector<TensorValue>{{os, std::move(v)}}; };
  switch (n.kind) {
    case OpKind::kConv: {
      const int64_t s = n.AttrInt("stride", 1), p = n.AttrInt("pad", 0);
      if (n.AttrInt("weight_grad") != 0) return one(ConvWeightGrad(*in[0], *in[1], os, s, p));
      return one(ConvForward(*in[0], *in[1], in.size() > 2 ? in[2] : nullptr, os, s, p));
    }
    case OpKind::kConvTranspose:
      return one(
          ConvTransposeForward(*in[0], *in[1], os, n.AttrInt("stride", 1), n.AttrInt("pad", 0)));
    case OpKind::kGemm: {
      const int64_t K = in[0]->shape.back();
      const int64_t N = in[1]->shape[1];
      const int64_t M = NumElements(in[0]->shape) / K;
      Vec out = BatchedMatMul(in[0]->data, in[1]->data, 1, M, N, K, true);
      if (in.size() > 2) {
        for (int64_t m = 0; m < M; ++m) {
          for (int64_t j = 0; j < N; ++j) out[m * N + j] += in[2]->data[j];
        }
      }
      return one(std::move(out));
    }
    case OpKind::kMatMul: {
      const Shape& a = in[0]->shape;
      const int64_t M = a[a.size() - 2], K = a.back(), N = in[1]->shape.back();
      const int64_t B = NumElements(a) / (M * K);
      return one(BatchedMatMul(in[0]->data, in[1]->data, B, M, N, K, false));
    }
    case OpKind::kAdd:
      return one(Binary(*in[0], *in[1], [](double x, double y) { return x + y; }));
    case OpKind::kSub:
      return one(Binary(*in[0], *in[1], [](double x, double y) { return x - y; }));
    case OpKind::kMul:
      return one(Binary(*in[0], *in[1], [](double x, double y) { return x * y; }));
    case OpKind::kScale: {
      const double alpha = n.AttrDouble("alpha", 1.0);
      Vec out = in[0]->data;
      for (auto& v : out) v *= alpha;
      return one(std::move(out));
    }
    case OpKind::kReLU: {
      Vec out = in[0]->data;
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
      return one(std::move(out));
    }
    case OpKind::kReLUGrad: {
      Vec out = in[0]->data;
      for (auto& v : out) v = v > 0.0 ? 1.0 : 0.0;
      return one(std::move(out));
    }
    case OpKind::kRsqrt: {
      const double eps = n.AttrDouble("eps", 0.0);
      Vec out = in[0]->data;
      for (auto& v : out) v = 1.0 / std::sqrt(v + eps);
      return one(std::move(out));
    }
    case OpKind::kSoftmax:
      return one(SoftmaxRows(*in[0], n.AttrInt("causal") != 0));
    case OpKind::kTranspose:
      return one(TransposeData(*in[0], n.AttrInts("perm"), os));
    case OpKind::kReshape:
      return one(in[0]->data);
    case OpKind::kReduceSum: {
      Vec out(static_cast<size_t>(NumElements(os)), 0.0);
      auto map = BroadcastMap(in[0]->shape, os);
      for (size_t i = 0; i < map.size(); ++i) out[map[i]] += in[0]->data[i];
      return one(std::move(out));
    }
    case OpKind::kExpand: {
      auto map = BroadcastMap(os, in[0]->shape);
      Vec out(map.size());
      for (size_t i = 0; i < map.size(); ++i) out[i] = in[0]->data[map[i]];
      return one(std::move(out));
    }
    case OpKind::kPool: {
      const Shape& xs = in[0]->shape;
      const int64_t hw = xs[2] * xs[3];
      Vec out(static_cast<size_t>(xs[0] * xs[1]), 0.0);
      for (size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < hw; ++j) acc += in[0]->data[i * hw + j];
        out[i] = acc / static_cast<double>(hw);
      }
      return one(std::move(out));
    }
    case OpKind::kLoss:
    case OpKind::kLossGrad: {
      const auto& x = *in[0];
      const auto& t = *in[1];
      const bool grad = n.kind == OpKind::kLossGrad;
      if (n.AttrInt("loss_kind") == kLossMeanSquared) {
        const double count = static_cast<double>(x.data.size());
        if (grad) {
          Vec out(x.data.size());
          for (size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * (x.data[i] - t.data[i]) / count;
          return one(std::move(out));
        }
        double acc = 0.0;
        for (size_t i = 0; i < x.data.size(); ++i) {
          const double d = x.data[i] - t.data[i];
          acc += d * d;
        }
        return one({acc / count});
      }
      const int64_t cols = x.shape.back();
      const int64_t rows = NumElements(x.shape) / cols;
      Vec probs = SoftmaxRows(x, false);
      if (grad) {
        Vec out(x.data.size());
        for (int64_t r = 0; r < rows; ++r) {
          double tsum = 0.0;
          for (int64_t j = 0; j < cols; ++j) tsum += t.data[r * cols + j];
          for (int64_t j = 0; j < cols; ++j) {
            const size_t i = static_cast<size_t>(r * cols + j);
            out[i] = (probs[i] * tsum - t.data[i]) / static_cast<double>(rows);
          }
        }
        return one(std::move(out));
      }
      double acc = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        const double* xi = &x.data[r * cols];
        double mx = xi[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) sum += std::exp(xi[j] - mx);
        const double lse = mx + std::log(sum);
        for (int64_t j = 0; j < cols; ++j) acc -= t.data[r * cols + j] * (xi[j] - lse);
      }
      return one({acc / static_cast<double>(rows)});
    }
    case OpKind::kSgdUpdate: {
      const double lr = n.AttrDouble("lr"), mu = n.AttrDouble("momentum");
      Vec theta(in[0]->data.size()), vel(theta.size());
      for (size_t i = 0; i < theta.size(); ++i) {
        vel[i] = mu * in[2]->data[i] - lr * in[1]->data[i];
        theta[i] = in[0]->data[i] + vel[i];
      }
      return {{os, std::move(theta)}, {os, std::move(vel)}};
    }
    case OpKind::kAdamUpdate: {
      const double lr = n.AttrDouble("lr"), b1 = n.AttrDouble("beta1"), b2 = n.AttrDouble("beta2"),
                   eps = n.AttrDouble("eps");
      const double t = static_cast<double>(n.AttrInt("step", 1));
      const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
      Vec theta(in[0]->data.size()), m(theta.size()), v(theta.size());
      for (size_t i = 0; i < theta.size(); ++i) {
        const double g = in[1]->data[i];
        m[i] = b1 * in[2]->data[i] + (1.0 - b1) * g;
        v[i] = b2 * in[3]->data[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        theta[i] = in[0]->data[i] - lr * mhat / (std::sqrt(vhat) + eps);
      }
      return {{os, std::move(theta)}, {os, std::move(m)}, {os, std::move(v)}};
    }
  }
  throw Error(ErrorCode::kUnsupportedOperator, std::string(ToString(n.kind)));
}

double Gaussian(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

Bindings Execute(const ComputationGraph& g, const Bindings& bindings) {
  return Execute(g, bindings, ReluMasks{});
}

Bindings Execute(const ComputationGraph& g, const Bindings& bindings, const ReluMasks& masks) {
  Bindings values;
  for (const auto& [id, e] : g.edges()) {
    if (!e.is_external()) continue;
    auto it = bindings.find(id);
    if (it == bindings.end()) throw Error(ErrorCode::kUnboundInput, "no value bound for " + id);
    if (it->second.shape != e.shape ||
        static_cast<int64_t>(it->second.data.size()) != NumElements(e.shape)) {
      throw Error(ErrorCode::kShapeMismatch, "binding for " + id + " has shape " +
                                                 ShapeToString(it->second.shape) + ", expected " +
                                                 ShapeToString(e.shape));
    }
    values[id] = it->second;
  }
  for (const auto& nid : TopologicalOrder(g)) {
    const auto& n = g.node(nid);
    std::vector<const TensorValue*> in;
    for (const auto& e : n.inputs) in.push_back(&values.at(e));
    std::vector<Shape> out_shapes;
    for (const auto& e : n.outputs) out_shapes.push_back(g.edge(e).shape);
    auto mask = masks.find(nid);
    if (mask != masks.end()) {
      Vec out = in[0]->data;
      for (size_t i = 0; i < out.size(); ++i) out[i] = mask->second[i] ? out[i] : 0.0;
      values[n.outputs[0]] = {out_shapes[0], std::move(out)};
      continue;
    }
    auto outs = RunNode(n, in, out_shapes);
    for (size_t k = 0; k < outs.size(); ++k) values[n.outputs[k]] = std::move(outs[k]);
  }
  return values;
}

double EvaluateLoss(const ComputationGraph& loss_graph, const Bindings& bindings) {
  auto values = Execute(loss_graph, bindings);
  return values.at(loss_graph.graph_outputs().at(0)).data.at(0);
}

TensorValue FiniteDifferenceGrad(const ComputationGraph& fwd, const LossSpec& loss,
                                 const std::string& theta, const Bindings& bindings, double h) {
  const ComputationGraph lg = AttachLoss(fwd, loss);
  auto it = bindings.find(theta);
  if (it == bindings.end()) throw Error(ErrorCode::kUnboundInput, "no value bound for " + theta);
  Bindings work = bindings;
  TensorValue grad = TensorValue::Zeros(it->second.shape);
  auto& param = work[theta].data;
  for (size_t i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + h;
    const double plus = EvaluateLoss(lg, work);
    param[i] = orig - h;
    const double minus = EvaluateLoss(lg, work);
    param[i] = orig;
    grad.data[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

Bindings RandomBindings(const ComputationGraph& g, std::mt19937_64& rng) {
  Bindings out;
  for (const auto& [id, e] : g.edges()) {
    if (!e.is_external()) continue;
    TensorValue v = TensorValue::Zeros(e.shape);
    switch (e.kind) {
      case EdgeKind::kWeight: {
        double scale = 1.0;
        if (e.shape.size() >= 2 && NumElements(e.shape) > e.shape.back()) {
          const int64_t fan_in =
              e.shape.size() == 4 ? NumElements(e.shape) / e.shape[0] : e.shape[0];
          scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        }
        for (auto& x : v.data) x = scale * Gaussian(rng);
        break;
      }
      case EdgeKind::kLabel: {
        bool one_hot = false;
        for (const auto& c : e.consumers) {
          const auto& n = g.node(c);
          if ((n.kind == OpKind::kLoss || n.kind == OpKind::kLossGrad) &&
              n.AttrInt("loss_kind") == kLossCrossEntropy) {
            one_hot = true;
          }
        }
        if (one_hot) {
          const int64_t cols = e.shape.back();
          for (size_t r = 0; r < v.data.size() / cols; ++r) {
            const auto pick = std::uniform_int_distribution<int64_t>(0, cols - 1)(rng);
            v.data[r * cols + pick] = 1.0;
          }
        } else {
          for (auto& x : v.data) x = Gaussian(rng);
        }
        break;
      }
      case EdgeKind::kOptimizerState: {
        bool second_moment = false;
        for (const auto& c : e.consumers) {
          const auto& n = g.node(c);
          if (n.kind == OpKind::kAdamUpdate && n.inputs.size() == 4 && n.inputs[3] == id) {
            second_moment = true;
          }
        }
        for (auto& x : v.data) {
          x = second_moment ? 0.01 * std::abs(Gaussian(rng)) : 0.1 * Gaussian(rng);
        }
        break;
      }
      default:
        for (auto& x : v.data) {
          do {
            x = Gaussian(rng);
          } while (std::abs(x) <= 1e-3);
        }
        break;
    }
    out[id] = std::move(v);
  }
  return out;
}

namespace {

ReluMasks MasksAt(const ComputationGraph& g, const Bindings& values) {
  ReluMasks masks;
  for (const auto& [id, n] : g.nodes()) {
    if (n.kind != OpKind::kReLU) continue;
    auto& m = masks[id];
    for (double x : values.at(n.inputs[0]).data) m.push_back(x > 0.0);
  }
  return masks;
}

// The floor keeps parameters with an identically zero gradient (e.g. key
// biases under softmax shift invariance) from turning rounding noise of the
// difference quotient into a large ratio.
double RelativeError(double a, double b, double loss) {
  const double floor = 1e-5 * std::max(1.0, std::abs(loss));
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

GradientReport CheckTrainingGraph(const ComputationGraph& fwd, const TrainingGraph& tg,
                                  const GradientCheckOptions& opts) {
  GradientReport report;
  const ComputationGraph lg = AttachLoss(fwd, tg.loss);
  std::mt19937_64 rng(opts.seed);
  std::map<std::string, ParameterCheck> checks;
  for (const auto& p : tg.parameters) checks[p.weight].weight = p.weight;

  for (int trial = 0; trial < opts.trials; ++trial) {
    const Bindings bind = RandomBindings(tg.graph, rng);
    const Bindings values = Execute(tg.graph, bind);
    // Differences are taken with the ReLU masks frozen at the sample point so a
    // probe that straddles a kink cannot corrupt the oracle.
    const Bindings base = Execute(lg, bind);
    const ReluMasks masks = MasksAt(lg, base);
    const double loss = base.at(lg.graph_outputs()[0]).data[0];

    for (const auto& p : tg.parameters) {
      ParameterCheck& chk = checks[p.weight];
      const auto& grad = values.at(p.grad).data;

      if (!p.update_node.empty()) {
        // Independent scalar evaluation of the update recurrences.
        const auto& opt = tg.optimizer;
        const auto& theta = bind.at(p.weight).data;
        const auto& theta_out = values.at(p.updated_weight).data;
        for (size_t i = 0; i < theta.size(); ++i) {
          double expect_theta;
          std::vector<double> expect_states;
          if (opt.kind == OptimizerKind::kSgdMomentum) {
            const double v = opt.momentum * bind.at(p.states[0]).data[i] - opt.lr * grad[i];
            expect_states = {v};
            expect_theta = theta[i] + v;
          } else {
            const double t = static_cast<double>(opt.step);
            const double m = opt.beta1 * bind.at(p.states[0]).data[i] + (1.0 - opt.beta1) * grad[i];
            const double v =
                opt.beta2 * bind.at(p.states[1]).data[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
            const double mhat = m / (1.0 - std::pow(opt.beta1, t));
            const double vhat = v / (1.0 - std::pow(opt.beta2, t));
            expect_states = {m, v};
            expect_theta = theta[i] - opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
          }
          bool exact = theta_out[i] == expect_theta;
          for (size_t s = 0; s < expect_states.size(); ++s) {
            exact = exact && values.at(p.updated_states[s]).data[i] == expect_states[s];
          }
          chk.update_exact = chk.update_exact && exact;
        }
      }

      std::vector<double> dir(grad.size());
      for (auto& d : dir) d = Gaussian(rng);
      double analytic = 0.0;
      for (size_t i = 0; i < dir.size(); ++i) analytic += grad[i] * dir[i];
      Bindings probe = bind;
      auto& data = probe[p.weight].data;
      for (size_t i = 0; i < dir.size(); ++i)
        data[i] = bind.at(p.weight).data[i] + opts.step * dir[i];
      const double lp = Execute(lg, probe, masks).at(lg.graph_outputs()[0]).data[0];
      for (size_t i = 0; i < dir.size(); ++i)
        data[i] = bind.at(p.weight).data[i] - opts.step * dir[i];
      const double lm = Execute(lg, probe, masks).at(lg.graph_outputs()[0]).data[0];
      const double rel = RelativeError(analytic, (lp - lm) / (2.0 * opts.step), loss);
      chk.max_rel_error = std::max(chk.max_rel_error, rel);
    }
  }

  for (auto& [w, chk] : checks) {
    chk.gradient_ok = chk.max_rel_error < opts.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, chk.max_rel_error);
    if (!chk.gradient_ok) {
      report.failures.push_back(w + ": gradient relative error " +
                                std::to_string(chk.max_rel_error));
    }
    if (!chk.update_exact) report.failures.push_back(w + ": optimizer update mismatch");
    report.parameters.push_back(chk);
  }
  report.passed = report.failures.empty();
  return report;
}

}  // namespace hdatrain
