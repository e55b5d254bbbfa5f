#include "dmpp/tape.hpp"

#include <cmath>
#include <string>

#include "dmpp/common.hpp"

namespace dmpp::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("tape: ") + what);
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.val = std::move(value);
  return push(std::move(n));
}

Tape::Id Tape::leaf(const Tensor& value, int param_index) {
  Node n;
  n.op = Op::Leaf;
  n.val = value;
  n.param_index = param_index;
  return push(std::move(n));
}

Tape::Id Tape::conv2d_same3(Id x, Id w, Id b) {
  const Tensor& X = at(x).val;
  const Tensor& W = at(w).val;
  const Tensor& B = at(b).val;
  require(X.shape.size() == 3, "conv2d input must be (H,W,C)");
  require(W.shape.size() == 4 && W.shape[0] == 3 && W.shape[1] == 3,
          "conv2d filter must be (3,3,Cin,Cout)");
  const std::size_t H = X.shape[0], Wd = X.shape[1], Cin = X.shape[2];
  const std::size_t Cout = W.shape[3];
  require(W.shape[2] == Cin, "conv2d channel mismatch");
  require(B.size() == Cout, "conv2d bias mismatch");

  Node n;
  n.op = Op::Conv2d;
  n.a = x;
  n.b = w;
  n.c = b;
  n.val = Tensor({H, Wd, Cout});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t xx = 0; xx < Wd; ++xx) {
      for (std::size_t co = 0; co < Cout; ++co) {
        double acc = B[co];
        for (int dy = -1; dy <= 1; ++dy) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const long sx = static_cast<long>(xx) + dx;
            if (sx < 0 || sx >= static_cast<long>(Wd)) continue;
            for (std::size_t ci = 0; ci < Cin; ++ci) {
              acc += X[(static_cast<std::size_t>(sy) * Wd + sx) * Cin + ci] *
                     W[((static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * Cin + ci) * Cout + co];
            }
          }
        }
        n.val[(y * Wd + xx) * Cout + co] = acc;
      }
    }
  }
  return push(std::move(n));
}

Tape::Id Tape::conv1d_same3(Id x, Id w, Id b) {
  const Tensor& X = at(x).val;
  const Tensor& W = at(w).val;
  const Tensor& B = at(b).val;
  require(X.shape.size() == 2, "conv1d input must be (N,C)");
  require(W.shape.size() == 3 && W.shape[0] == 3, "conv1d filter must be (3,Cin,Cout)");
  const std::size_t N = X.shape[0], Cin = X.shape[1], Cout = W.shape[2];
  require(W.shape[1] == Cin, "conv1d channel mismatch");
  require(B.size() == Cout, "conv1d bias mismatch");

  Node n;
  n.op = Op::Conv1d;
  n.a = x;
  n.b = w;
  n.c = b;
  n.val = Tensor({N, Cout});
  for (std::size_t p = 0; p < N; ++p) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double acc = B[co];
      for (int dp = -1; dp <= 1; ++dp) {
        const long sp = static_cast<long>(p) + dp;
        if (sp < 0 || sp >= static_cast<long>(N)) continue;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          acc += X[static_cast<std::size_t>(sp) * Cin + ci] *
                 W[(static_cast<std::size_t>(dp + 1) * Cin + ci) * Cout + co];
        }
      }
      n.val[p * Cout + co] = acc;
    }
  }
  return push(std::move(n));
}

Tape::Id Tape::relu(Id x) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.val = at(x).val;
  for (double& v : n.val.v) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Tape::Id Tape::tanh_op(Id x) {
  Node n;
  n.op = Op::Tanh;
  n.a = x;
  n.val = at(x).val;
  for (double& v : n.val.v) v = std::tanh(v);
  return push(std::move(n));
}

Tape::Id Tape::softmax_all(Id x) {
  Node n;
  n.op = Op::Softmax;
  n.a = x;
  n.val = at(x).val;
  double hi = n.val[0];
  for (double v : n.val.v) hi = v > hi ? v : hi;
  double sum = 0.0;
  for (double& v : n.val.v) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (double& v : n.val.v) v /= sum;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = at(a).val;
  const Tensor& B = at(b).val;
  require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[0],
          "matmul shape mismatch");
  const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[1];
  Node n;
  n.op = Op::Matmul;
  n.a = a;
  n.b = b;
  n.val = Tensor({m, nn});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = A[i * k + l];
      for (std::size_t j = 0; j < nn; ++j) n.val[i * nn + j] += ail * B[l * nn + j];
    }
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& A = at(a).val;
  const Tensor& B = at(b).val;
  require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[1],
          "matmul_nt shape mismatch");
  const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[0];
  Node n;
  n.op = Op::MatmulNT;
  n.a = a;
  n.b = b;
  n.val = Tensor({m, nn});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nn; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += A[i * k + l] * B[j * k + l];
      n.val[i * nn + j] = acc;
    }
  return push(std::move(n));
}

Tape::Id Tape::dense(Id w, Id x, Id b) {
  const Tensor& W = at(w).val;
  const Tensor& X = at(x).val;
  const Tensor& B = at(b).val;
  require(W.shape.size() == 2, "dense weight must be (out,in)");
  const std::size_t out = W.shape[0], in = W.shape[1];
  require(X.size() == in, "dense input size mismatch");
  require(B.size() == out, "dense bias size mismatch");
  Node n;
  n.op = Op::Dense;
  n.a = w;
  n.b = x;
  n.c = b;
  n.val = Tensor({out});
  for (std::size_t o = 0; o < out; ++o) {
    double acc = B[o];
    for (std::size_t i = 0; i < in; ++i) acc += W[o * in + i] * X[i];
    n.val[o] = acc;
  }
  return push(std::move(n));
}

Tape::Id Tape::scale_rows(Id x, Id a) {
  const Tensor& X = at(x).val;
  const Tensor& A = at(a).val;
  require(!X.shape.empty(), "scale_rows input must have a channel axis");
  const std::size_t C = X.shape.back();
  const std::size_t P = X.size() / C;
  require(A.size() == P, "scale_rows weight count mismatch");
  Node n;
  n.op = Op::ScaleRows;
  n.a = x;
  n.b = a;
  n.val = X;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c) n.val[p * C + c] = X[p * C + c] * A[p];
  return push(std::move(n));
}

Tape::Id Tape::concat(const std::vector<Id>& parts) {
  require(!parts.empty(), "concat needs at least one part");
  std::size_t total = 0;
  for (Id p : parts) total += at(p).val.size();
  Node n;
  n.op = Op::Concat;
  n.parts = parts;
  n.val = Tensor({total});
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor& t = at(p).val;
    for (std::size_t i = 0; i < t.size(); ++i) n.val[off + i] = t[i];
    off += t.size();
  }
  return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id table, std::vector<int> ids) {
  const Tensor& T = at(table).val;
  require(T.shape.size() == 2, "gather table must be (R,D)");
  const std::size_t R = T.shape[0], D = T.shape[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= R)
      throw DataError("tape: token id " + std::to_string(id) +
                      " outside vocabulary of size " + std::to_string(R));
  }
  Node n;
  n.op = Op::Gather;
  n.a = table;
  n.ids = std::move(ids);
  n.val = Tensor({n.ids.size(), D});
  for (std::size_t i = 0; i < n.ids.size(); ++i)
    for (std::size_t d = 0; d < D; ++d)
      n.val[i * D + d] = T[static_cast<std::size_t>(n.ids[i]) * D + d];
  return push(std::move(n));
}

Tape::Id Tape::dropout(Id x, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
  const Tensor& X = at(x).val;
  Node n;
  n.op = Op::Dropout;
  n.a = x;
  n.val = X;
  n.mask.resize(X.size());
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < X.size(); ++i) {
    n.mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    n.val[i] = X[i] * n.mask[i];
  }
  return push(std::move(n));
}

Tape::Id Tape::softplus(Id x) {
  Node n;
  n.op = Op::Softplus;
  n.a = x;
  n.val = at(x).val;
  for (double& v : n.val.v) {
    v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return push(std::move(n));
}

Tape::Id Tape::reshape(Id x, std::vector<std::size_t> shape) {
  const Tensor& X = at(x).val;
  require(Tensor::count(shape) == X.size(), "reshape size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.a = x;
  n.val = X;
  n.val.shape = std::move(shape);
  return push(std::move(n));
}

void Tape::backward(Id root, double seed) {
  if (nodes_.empty()) throw ConfigError("tape: backward before any forward");
  require(root >= 0 && static_cast<std::size_t>(root) < nodes_.size(),
          "backward root out of range");
  require(at(root).val.size() == 1, "backward root must be scalar");

  for (Node& n : nodes_) {
    n.grad = Tensor(n.val.shape);
  }
  at(root).grad[0] = seed;

  for (Id id = root; id >= 0; --id) {
    Node& n = at(id);
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Constant:
      case Op::Leaf:
        break;
      case Op::Conv2d: {
        Tensor& gx = at(n.a).grad;
        Tensor& gw = at(n.b).grad;
        Tensor& gb = at(n.c).grad;
        const Tensor& X = at(n.a).val;
        const Tensor& W = at(n.b).val;
        const std::size_t H = X.shape[0], Wd = X.shape[1], Cin = X.shape[2];
        const std::size_t Cout = W.shape[3];
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < Wd; ++xx)
            for (std::size_t co = 0; co < Cout; ++co) {
              const double go = g[(y * Wd + xx) * Cout + co];
              if (go == 0.0) continue;
              gb[co] += go;
              for (int dy = -1; dy <= 1; ++dy) {
                const long sy = static_cast<long>(y) + dy;
                if (sy < 0 || sy >= static_cast<long>(H)) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                  const long sx = static_cast<long>(xx) + dx;
                  if (sx < 0 || sx >= static_cast<long>(Wd)) continue;
                  for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const std::size_t xi =
                        (static_cast<std::size_t>(sy) * Wd + sx) * Cin + ci;
                    const std::size_t wi =
                        ((static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * Cin + ci) * Cout + co;
                    gx[xi] += go * W[wi];
                    gw[wi] += go * X[xi];
                  }
                }
              }
            }
        break;
      }
      case Op::Conv1d: {
        Tensor& gx = at(n.a).grad;
        Tensor& gw = at(n.b).grad;
        Tensor& gb = at(n.c).grad;
        const Tensor& X = at(n.a).val;
        const Tensor& W = at(n.b).val;
        const std::size_t N = X.shape[0], Cin = X.shape[1], Cout = W.shape[2];
        for (std::size_t p = 0; p < N; ++p)
          for (std::size_t co = 0; co < Cout; ++co) {
            const double go = g[p * Cout + co];
            if (go == 0.0) continue;
            gb[co] += go;
            for (int dp = -1; dp <= 1; ++dp) {
              const long sp = static_cast<long>(p) + dp;
              if (sp < 0 || sp >= static_cast<long>(N)) continue;
              for (std::size_t ci = 0; ci < Cin; ++ci) {
                const std::size_t xi = static_cast<std::size_t>(sp) * Cin + ci;
                const std::size_t wi =
                    (static_cast<std::size_t>(dp + 1) * Cin + ci) * Cout + co;
                gx[xi] += go * W[wi];
                gw[wi] += go * X[xi];
              }
            }
          }
        break;
      }
      case Op::Relu: {
        Tensor& gx = at(n.a).grad;
        const Tensor& X = at(n.a).val;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::Tanh: {
        Tensor& gx = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
        break;
      }
      case Op::Softmax: {
        Tensor& gx = at(n.a).grad;
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.val[i];
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += n.val[i] * (g[i] - dot);
        break;
      }
      case Op::Matmul: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        const Tensor& A = at(n.a).val;
        const Tensor& B = at(n.b).val;
        const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j) {
            const double go = g[i * nn + j];
            if (go == 0.0) continue;
            for (std::size_t l = 0; l < k; ++l) {
              ga[i * k + l] += go * B[l * nn + j];
              gb[l * nn + j] += go * A[i * k + l];
            }
          }
        break;
      }
      case Op::MatmulNT: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        const Tensor& A = at(n.a).val;
        const Tensor& B = at(n.b).val;
        const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[0];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < nn; ++j) {
            const double go = g[i * nn + j];
            if (go == 0.0) continue;
            for (std::size_t l = 0; l < k; ++l) {
              ga[i * k + l] += go * B[j * k + l];
              gb[j * k + l] += go * A[i * k + l];
            }
          }
        break;
      }
      case Op::Dense: {
        Tensor& gw = at(n.a).grad;
        Tensor& gx = at(n.b).grad;
        Tensor& gb = at(n.c).grad;
        const Tensor& W = at(n.a).val;
        const Tensor& X = at(n.b).val;
        const std::size_t out = W.shape[0], in = W.shape[1];
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[o];
          if (go == 0.0) continue;
          gb[o] += go;
          for (std::size_t i = 0; i < in; ++i) {
            gw[o * in + i] += go * X[i];
            gx[i] += go * W[o * in + i];
          }
        }
        break;
      }
      case Op::ScaleRows: {
        Tensor& gx = at(n.a).grad;
        Tensor& ga = at(n.b).grad;
        const Tensor& X = at(n.a).val;
        const Tensor& A = at(n.b).val;
        const std::size_t C = X.shape.back();
        const std::size_t P = X.size() / C;
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t c = 0; c < C; ++c) {
            const double go = g[p * C + c];
            gx[p * C + c] += go * A[p];
            ga[p] += go * X[p * C + c];
          }
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (Id p : n.parts) {
          Tensor& gp = at(p).grad;
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
          off += gp.size();
        }
        break;
      }
      case Op::Gather: {
        Tensor& gt = at(n.a).grad;
        const std::size_t D = n.val.shape[1];
        for (std::size_t i = 0; i < n.ids.size(); ++i)
          for (std::size_t d = 0; d < D; ++d)
            gt[static_cast<std::size_t>(n.ids[i]) * D + d] += g[i * D + d];
        break;
      }
      case Op::Dropout: {
        Tensor& gx = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.mask[i];
        break;
      }
      case Op::Softplus: {
        Tensor& gx = at(n.a).grad;
        const Tensor& X = at(n.a).val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double z = X[i];
          const double sig =
              z > 0.0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
          gx[i] += g[i] * sig;
        }
        break;
      }
      case Op::Reshape: {
        Tensor& gx = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        break;
      }
    }
  }
}

}  // namespace dmpp::nn
