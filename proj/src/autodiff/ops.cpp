#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "coralvol/autodiff.hpp"

namespace coralvol::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

Tape& tape_of(const char* op, Var a) {
  if (!a.tape) throw std::logic_error(std::string(op) + ": detached Var");
  return *a.tape;
}

Tape& tape_of(const char* op, Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error(std::string(op) + ": operands on different tapes");
  return tape_of(op, a);
}

bool is_suffix(const Shape& small, const Shape& big) {
  return small.size() <= big.size() && std::equal(small.begin(), small.end(), big.end() - small.size());
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  if (shape_size(b) == 1) return a;
  if (shape_size(a) == 1) return b;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                   " do not broadcast");
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_at(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

// Elementwise unary op: value f(x), derivative df(x).
template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  Tape& tape = tape_of(op, a);
  const Tensor& x = a.value();
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const std::uint32_t ia = a.id;
  return tape.record(op, std::move(y), {a}, [ia, df](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_for(ia);
    if (!ga) return;
    const Tensor& xv = t.value(Var{&t, ia});
    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i] * df(xv.data[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = tape_of("add", a, b);
  const Tensor &x = a.value(), &z = b.value();
  Tensor y(broadcast_shape("add", x.shape, z.shape));
  const std::size_t na = x.size(), nb = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = x.data[i % na] + z.data[i % nb];
  const std::uint32_t ia = a.id, ib = b.id;
  return tape.record("add", std::move(y), {a, b}, [ia, ib, na, nb](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_for(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i % na] += g.data[i];
    if (Tensor* gb = t.grad_for(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i % nb] += g.data[i];
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of("sub", a, b);
  const Tensor &x = a.value(), &z = b.value();
  Tensor y(broadcast_shape("sub", x.shape, z.shape));
  const std::size_t na = x.size(), nb = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = x.data[i % na] - z.data[i % nb];
  const std::uint32_t ia = a.id, ib = b.id;
  return tape.record("sub", std::move(y), {a, b}, [ia, ib, na, nb](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_for(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i % na] += g.data[i];
    if (Tensor* gb = t.grad_for(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i % nb] -= g.data[i];
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of("mul", a, b);
  const Tensor &x = a.value(), &z = b.value();
  Tensor y(broadcast_shape("mul", x.shape, z.shape));
  const std::size_t na = x.size(), nb = z.size();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = x.data[i % na] * z.data[i % nb];
  const std::uint32_t ia = a.id, ib = b.id;
  return tape.record("mul", std::move(y), {a, b}, [ia, ib, na, nb](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(Var{&t, ia});
    const Tensor& zv = t.value(Var{&t, ib});
    if (Tensor* ga = t.grad_for(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i % na] += g.data[i] * zv.data[i % nb];
    if (Tensor* gb = t.grad_for(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i % nb] += g.data[i] * xv.data[i % na];
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of("matmul", a, b);
  const Tensor &x = a.value(), &z = b.value();
  if (x.rank() != 2 || z.rank() != 2 || x.shape[1] != z.shape[0])
    throw ShapeError("matmul: shapes " + shape_str(x.shape) + " and " + shape_str(z.shape) +
                     " are not compatible");
  const auto m = static_cast<Eigen::Index>(x.shape[0]), k = static_cast<Eigen::Index>(x.shape[1]),
             n = static_cast<Eigen::Index>(z.shape[1]);
  Tensor y({x.shape[0], z.shape[1]});
  Map(y.data.data(), m, n).noalias() = MapC(x.data.data(), m, k) * MapC(z.data.data(), k, n);
  const std::uint32_t ia = a.id, ib = b.id;
  return tape.record("matmul", std::move(y), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
    const MapC G(g.data.data(), m, n);
    if (Tensor* ga = t.grad_for(ia))
      Map(ga->data.data(), m, k).noalias() += G * MapC(t.value(Var{&t, ib}).data.data(), k, n).transpose();
    if (Tensor* gb = t.grad_for(ib))
      Map(gb->data.data(), k, n).noalias() += MapC(t.value(Var{&t, ia}).data.data(), m, k).transpose() * G;
  });
}

Var sum(Var a) {
  Tape& tape = tape_of("sum", a);
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const std::uint32_t ia = a.id;
  return tape.record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_for(ia))
      for (double& v : ga->data) v += g.data[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_reduce(Var a, std::size_t axis) {
  Tape& tape = tape_of("sum_reduce", a);
  const Tensor& x = a.value();
  const AxisSplit s = split_at("sum_reduce", x.shape, axis);
  Tensor y(drop_axis(x.shape, axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        y.data[o * s.inner + in] += x.data[(o * s.n + j) * s.inner + in];
  const std::uint32_t ia = a.id;
  return tape.record("sum_reduce", std::move(y), {a}, [ia, s](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_for(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.n; ++j)
        for (std::size_t in = 0; in < s.inner; ++in)
          ga->data[(o * s.n + j) * s.inner + in] += g.data[o * s.inner + in];
  });
}

Var mean_reduce(Var a, std::size_t axis) {
  const std::size_t n = split_at("mean_reduce", a.shape(), axis).n;
  if (n == 0) throw ShapeError("mean_reduce over an empty axis");
  return scale(sum_reduce(a, axis), 1.0 / static_cast<double>(n));
}

Var max_reduce(Var a, std::size_t axis) {
  Tape& tape = tape_of("max_reduce", a);
  const Tensor& x = a.value();
  const AxisSplit s = split_at("max_reduce", x.shape, axis);
  if (s.n == 0) throw ShapeError("max_reduce over an empty axis");
  Tensor y(drop_axis(x.shape, axis));
  std::vector<std::uint32_t> arg(y.size(), 0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t out = o * s.inner + in;
      double best = x.data[o * s.n * s.inner + in];
      for (std::size_t j = 1; j < s.n; ++j) {
        const double v = x.data[(o * s.n + j) * s.inner + in];
        if (v > best) {
          best = v;
          arg[out] = static_cast<std::uint32_t>(j);
        }
      }
      y.data[out] = best;
    }
  const std::uint32_t ia = a.id;
  return tape.record("max_reduce", std::move(y), {a},
                     [ia, s, arg = std::move(arg)](Tape& t, const Tensor& g) {
                       Tensor* ga = t.grad_for(ia);
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t in = 0; in < s.inner; ++in) {
                           const std::size_t out = o * s.inner + in;
                           ga->data[(o * s.n + arg[out]) * s.inner + in] += g.data[out];
                         }
                     });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tape& tape = tape_of("concat", parts[0]);
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    tape_of("concat", parts[0], p);
    const Shape& s = p.shape();
    Shape a = s, b = first;
    if (s.size() != first.size() || (a[axis] = 0, b[axis] = 0, a != b))
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) + " differ off-axis");
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  const AxisSplit s = split_at("concat", out_shape, axis);
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& x = parts[p].value();
    const std::size_t block = widths[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  y.data.begin() + static_cast<std::ptrdiff_t>(o * s.n * s.inner + offset));
    offset += block;
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return tape.record("concat", std::move(y), parts, [ids, widths, s](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t block = widths[p] * s.inner;
      if (Tensor* gp = t.grad_for(ids[p]))
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < block; ++i)
            gp->data[o * block + i] += g.data[o * s.n * s.inner + offset + i];
      offset += block;
    }
  });
}

Var gather(Var a, const std::vector<std::uint32_t>& rows) {
  Tape& tape = tape_of("gather", a);
  const Tensor& x = a.value();
  if (x.rank() < 1) throw ShapeError("gather on a scalar");
  const std::size_t n = x.shape[0], width = x.size() / std::max<std::size_t>(n, 1);
  Shape out_shape = x.shape;
  out_shape[0] = rows.size();
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n)
      throw ShapeError("gather: row " + std::to_string(rows[r]) + " out of range for " + shape_str(x.shape));
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                y.data.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  const std::uint32_t ia = a.id;
  return tape.record("gather", std::move(y), {a}, [ia, rows, width](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_for(ia);
    if (!ga) return;
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < width; ++c) ga->data[rows[r] * width + c] += g.data[r * width + c];
  });
}

Var select(Var a, std::size_t axis, std::size_t index) {
  Tape& tape = tape_of("select", a);
  const Tensor& x = a.value();
  const AxisSplit s = split_at("select", x.shape, axis);
  if (index >= s.n)
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " + shape_str(x.shape));
  Tensor y(drop_axis(x.shape, axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in)
      y.data[o * s.inner + in] = x.data[(o * s.n + index) * s.inner + in];
  const std::uint32_t ia = a.id;
  return tape.record("select", std::move(y), {a}, [ia, s, index](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_for(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in)
        ga->data[(o * s.n + index) * s.inner + in] += g.data[o * s.inner + in];
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of("reshape", a);
  const Tensor& x = a.value();
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
  Tensor y(std::move(shape), x.data);
  const std::uint32_t ia = a.id;
  return tape.record("reshape", std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_for(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i];
  });
}

Var instance_norm(Var a, double eps) {
  Tape& tape = tape_of("instance_norm", a);
  const Tensor& x = a.value();
  if (x.rank() < 2) throw ShapeError("instance_norm needs rank >= 2, got " + shape_str(x.shape));
  const std::size_t c = x.shape.back(), m = x.size() / c;
  std::vector<double> mu(c, 0.0), inv(c, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) mu[j] += x.data[r * c + j];
  for (auto& v : mu) v /= static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x.data[r * c + j] - mu[j];
      inv[j] += d * d;
    }
  for (auto& v : inv) v = 1.0 / std::sqrt(v / static_cast<double>(m) + eps);
  Tensor y(x.shape);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) y.data[r * c + j] = (x.data[r * c + j] - mu[j]) * inv[j];
  const std::uint32_t ia = a.id;
  return tape.record("instance_norm", std::move(y), {a},
                     [ia, m, c, mu = std::move(mu), inv = std::move(inv)](Tape& t, const Tensor& g) {
                       Tensor* ga = t.grad_for(ia);
                       if (!ga) return;
                       const Tensor& xv = t.value(Var{&t, ia});
                       std::vector<double> mg(c, 0.0), mgy(c, 0.0);
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double yn = (xv.data[r * c + j] - mu[j]) * inv[j];
                           mg[j] += g.data[r * c + j];
                           mgy[j] += g.data[r * c + j] * yn;
                         }
                       for (std::size_t j = 0; j < c; ++j) {
                         mg[j] /= static_cast<double>(m);
                         mgy[j] /= static_cast<double>(m);
                       }
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double yn = (xv.data[r * c + j] - mu[j]) * inv[j];
                           ga->data[r * c + j] += inv[j] * (g.data[r * c + j] - mg[j] - yn * mgy[j]);
                         }
                     });
}

Var dropout(Var a, double p, std::uint64_t seed, bool train) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
  Tape& tape = tape_of("dropout", a);
  const Tensor& x = a.value();
  std::vector<double> mask(x.size(), 1.0);
  if (train && p > 0.0) {
    Rng rng(mix_seed(seed, 0x64726f70ULL));
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& v : mask) v = rng.uniform() < p ? 0.0 : keep_scale;
  }
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] * mask[i];
  const std::uint32_t ia = a.id;
  return tape.record("dropout", std::move(y), {a}, [ia, mask = std::move(mask)](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_for(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i] * mask[i];
  });
}

}  // namespace coralvol::ad
