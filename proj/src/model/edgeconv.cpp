#include <algorithm>
#include <cmath>

#include "coralvol/model.hpp"

namespace coralvol::model {

namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void check_shapes(const char* op, Var features, const std::vector<std::uint32_t>& neighbors, std::size_t k,
                  const EdgeConvParams& p) {
  const auto& f = features.shape();
  const auto& ws = p.w_self.shape();
  if (f.size() != 2 || ws.size() != 2 || f[1] != ws[0] || p.w_diff.shape() != ws ||
      p.gamma.shape() != ad::Shape{ws[1]} || p.beta.shape() != ad::Shape{ws[1]})
    throw ad::ShapeError(std::string(op) + ": features " + ad::shape_str(f) + " vs weights " +
                         ad::shape_str(ws) + "/" + ad::shape_str(p.w_diff.shape()) + ", gamma " +
                         ad::shape_str(p.gamma.shape()) + ", beta " + ad::shape_str(p.beta.shape()));
  if (k < 1 || neighbors.size() != f[0] * k)
    throw ad::ShapeError(std::string(op) + ": neighbour list of " + std::to_string(neighbors.size()) +
                         " entries for " + std::to_string(f[0]) + " points with k=" + std::to_string(k));
  for (auto j : neighbors)
    if (j >= f[0]) throw ad::ShapeError(std::string(op) + ": neighbour index out of range");
}

// P = F (W_self - W_diff) is the per-node term, Q = F W_diff the per-neighbour term.
std::pair<Var, Var> node_terms(Var features, const EdgeConvParams& p) {
  return {ad::matmul(features, ad::sub(p.w_self, p.w_diff)), ad::matmul(features, p.w_diff)};
}

// Fused gather + instance norm + affine + leaky ReLU + max over neighbours.
//
// Edge values are e_ij = p_i + q_nbr(ij), so first and second moments and the
// dense part of the normalization gradient reduce to per-node sums; only the
// max search and one scatter touch every edge.
Var edge_aggregate(Var pv, Var qv, const std::vector<std::uint32_t>& nbr, std::size_t k, Var gamma_v,
                   Var beta_v, double slope) {
  Tape& tape = *pv.tape;
  const Tensor& P = pv.value();
  const Tensor& Q = qv.value();
  const std::size_t n = P.shape[0], c = P.shape[1];
  const double edges = static_cast<double>(n * k);
  const double* gamma = gamma_v.value().data.data();
  const double* beta = beta_v.value().data.data();

  std::vector<double> count(n, 0.0);
  for (auto j : nbr) count[j] += 1.0;
  // s_i = sum over neighbours of q
  std::vector<double> s(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* si = &s[i * c];
    for (std::size_t j = 0; j < k; ++j) {
      const double* q = &Q.data[nbr[i * k + j] * c];
      for (std::size_t ch = 0; ch < c; ++ch) si[ch] += q[ch];
    }
  }
  std::vector<double> mean(c, 0.0), inv(c, 0.0);
  const double kk = static_cast<double>(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = &P.data[i * c];
    const double* q = &Q.data[i * c];
    const double* si = &s[i * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] += kk * p[ch] + count[i] * q[ch];
      inv[ch] += kk * p[ch] * p[ch] + 2.0 * p[ch] * si[ch] + count[i] * q[ch] * q[ch];
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    mean[ch] /= edges;
    const double var = std::max(inv[ch] / edges - mean[ch] * mean[ch], 0.0);
    inv[ch] = 1.0 / std::sqrt(var + ad::kNormEps);
  }

  // For fixed i the affine output is monotone in q (direction sign(gamma)), so
  // the arg-max search runs on sign * q; ties keep the first neighbour.
  std::vector<double> sign(c);
  for (std::size_t ch = 0; ch < c; ++ch) sign[ch] = gamma[ch] > 0.0 ? 1.0 : (gamma[ch] < 0.0 ? -1.0 : 0.0);
  Tensor y({n, c});
  std::vector<std::uint32_t> arg(n * c, 0);
  std::vector<double> best(c), best_j(c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* q0 = &Q.data[nbr[i * k] * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      best[ch] = sign[ch] * q0[ch];
      best_j[ch] = 0.0;
    }
    for (std::size_t j = 1; j < k; ++j) {
      const double* q = &Q.data[nbr[i * k + j] * c];
      const double jd = static_cast<double>(j);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = sign[ch] * q[ch];
        const bool better = v > best[ch];
        best[ch] = better ? v : best[ch];
        best_j[ch] = better ? jd : best_j[ch];
      }
    }
    const double* p = &P.data[i * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto j = static_cast<std::uint32_t>(best_j[ch]);
      arg[i * c + ch] = j;
      const double q = Q.data[nbr[i * k + j] * c + ch];
      const double z = gamma[ch] * ((p[ch] + q - mean[ch]) * inv[ch]) + beta[ch];
      y.data[i * c + ch] = z > 0.0 ? z : slope * z;
    }
  }

  const std::uint32_t ip = pv.id, iq = qv.id, ig = gamma_v.id, ib = beta_v.id;
  return tape.record(
      "edge_aggregate", std::move(y), {pv, qv, gamma_v, beta_v},
      [ip, iq, ig, ib, nbr, k, n, c, slope, count = std::move(count), s = std::move(s), mean = std::move(mean),
       inv = std::move(inv), arg = std::move(arg)](Tape& t, const Tensor& g) {
        const Tensor& P = t.value(Var{&t, ip});
        const Tensor& Q = t.value(Var{&t, iq});
        const double* gamma = t.value(Var{&t, ig}).data.data();
        const double* beta = t.value(Var{&t, ib}).data.data();
        const double edges = static_cast<double>(n * k);
        const double kk = static_cast<double>(k);

        // Gradient w.r.t. the affine output z, nonzero only at each arg-max edge.
        std::vector<double> gz(n * c);
        std::vector<double> sum_gz(c, 0.0), sum_gzx(c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double q = Q.data[nbr[i * k + arg[i * c + ch]] * c + ch];
            const double xh = (P.data[i * c + ch] + q - mean[ch]) * inv[ch];
            const double z = gamma[ch] * xh + beta[ch];
            const double v = g.data[i * c + ch] * (z > 0.0 ? 1.0 : slope);
            gz[i * c + ch] = v;
            sum_gz[ch] += v;
            sum_gzx[ch] += v * xh;
          }
        if (Tensor* gb = t.grad_for(ib))
          for (std::size_t ch = 0; ch < c; ++ch) gb->data[ch] += sum_gz[ch];
        if (Tensor* gg = t.grad_for(ig))
          for (std::size_t ch = 0; ch < c; ++ch) gg->data[ch] += sum_gzx[ch];

        Tensor* gp = t.grad_for(ip);
        Tensor* gq = t.grad_for(iq);
        if (!gp && !gq) return;
        // With d xhat = gamma * gz, the norm backward is
        //   d e = inv * (d xhat - mean(d xhat) - xhat * mean(d xhat * xhat)),
        // whose dense part is alpha + beta * (p + q) on every edge.
        std::vector<double> al(c), be(c), sg(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double a = gamma[ch] * sum_gz[ch] / edges;
          const double b = gamma[ch] * sum_gzx[ch] / edges;
          const double inv2b = inv[ch] * inv[ch] * b;
          al[ch] = -inv[ch] * a + inv2b * mean[ch];
          be[ch] = -inv2b;
          sg[ch] = gamma[ch] * inv[ch];
        }
        if (gp)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t ic = i * c + ch;
              gp->data[ic] += kk * (al[ch] + be[ch] * P.data[ic]) + be[ch] * s[ic] + sg[ch] * gz[ic];
            }
        if (gq) {
          std::vector<double> row(c);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) row[ch] = al[ch] + be[ch] * P.data[i * c + ch];
            for (std::size_t j = 0; j < k; ++j) {
              double* gqj = &gq->data[nbr[i * k + j] * c];
              for (std::size_t ch = 0; ch < c; ++ch) gqj[ch] += row[ch];
            }
            for (std::size_t ch = 0; ch < c; ++ch)
              gq->data[nbr[i * k + arg[i * c + ch]] * c + ch] += sg[ch] * gz[i * c + ch];
          }
          for (std::size_t m = 0; m < n; ++m)
            for (std::size_t ch = 0; ch < c; ++ch) gq->data[m * c + ch] += count[m] * be[ch] * Q.data[m * c + ch];
        }
      });
}

}  // namespace

Var edge_conv(Var features, const std::vector<std::uint32_t>& neighbors, std::size_t k, const EdgeConvParams& p,
              double slope) {
  check_shapes("edge_conv", features, neighbors, k, p);
  const auto [pv, qv] = node_terms(features, p);
  return edge_aggregate(pv, qv, neighbors, k, p.gamma, p.beta, slope);
}

Var edge_conv_reference(Var features, const std::vector<std::uint32_t>& neighbors, std::size_t k,
                        const EdgeConvParams& p, double slope) {
  check_shapes("edge_conv_reference", features, neighbors, k, p);
  const std::size_t n = features.shape()[0];
  const std::size_t c = p.w_self.shape()[1];
  std::vector<std::uint32_t> self(n * k);
  for (std::size_t i = 0; i < n * k; ++i) self[i] = static_cast<std::uint32_t>(i / k);
  const auto [pv, qv] = node_terms(features, p);
  Var e = ad::add(ad::gather(pv, self), ad::gather(qv, neighbors));  // [N*k, C]
  Var z = ad::add(ad::mul(ad::instance_norm(e), p.gamma), p.beta);
  Var act = ad::reshape(ad::leaky_relu(z, slope), {n, k, c});
  return ad::max_reduce(act, 1);
}

}  // namespace coralvol::model
