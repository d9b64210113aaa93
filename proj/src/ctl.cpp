#include "csanmt/ctl.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace csanmt {

namespace {

// cos(a,b) over h dims; when weight != 0, accumulates weight * dcos into the
// provided gradient rows (either may be null). The epsilon only guards the
// division; an exactly zero norm is reported as a dead vector.
double cos_pair(const double* a, const double* b, int64_t h, double weight, double* ga, double* gb) {
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int64_t i = 0; i < h; ++i) {
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    double na = std::sqrt(saa), nb = std::sqrt(sbb);
    if (na == 0.0 || nb == 0.0) throw NumericError("ctl: zero-norm vector in cosine");
    double nae = na + kCosineEps, nbe = nb + kCosineEps;
    double c = sab / (nae * nbe);
    if (weight != 0.0) {
        for (int64_t i = 0; i < h; ++i) {
            if (ga) ga[i] += weight * (b[i] / (nae * nbe) - c * a[i] / (nae * na));
            if (gb) gb[i] += weight * (a[i] / (nae * nbe) - c * b[i] / (nbe * nb));
        }
    }
    return c;
}

// Shared forward/backward evaluation with frozen lambdas. Gradients are
// accumulated as gscale * dLoss when grx/gry are non-null.
double ctl_eval(const Tensor& rx, const Tensor& ry, const Tensor& lx, const Tensor& ly, double tau,
                double gscale, Tensor* grx, Tensor* gry, CtlDiag* diag) {
    int64_t b = rx.rows(), h = rx.cols();
    double loss = 0.0;
    double pos_total = 0.0, neg_total = 0.0;
    int64_t neg_count = 0;
    std::vector<double> terms(static_cast<size_t>(2 * b));
    std::vector<double> neg(static_cast<size_t>(h));
    std::vector<double> gneg(static_cast<size_t>(h));
    for (int64_t i = 0; i < b; ++i) {
        const double* rxi = rx.data.data() + i * h;
        const double* ryi = ry.data.data() + i * h;
        double t0 = cos_pair(rxi, ryi, h, 0.0, nullptr, nullptr) / tau;
        pos_total += t0 * tau;
        // Term order per i: y-side then x-side for each j != i.
        size_t nt = 0;
        for (int64_t j = 0; j < b; ++j) {
            if (j == i) continue;
            for (int side = 0; side < 2; ++side) {
                const Tensor& r = side == 0 ? ry : rx;
                const Tensor& lam = side == 0 ? ly : lx;
                const double* anchor = r.data.data() + i * h;
                const double* other = r.data.data() + j * h;
                double l = lam.at(i, j);
                for (int64_t d = 0; d < h; ++d)
                    neg[static_cast<size_t>(d)] = anchor[d] + l * (other[d] - anchor[d]);
                double s = cos_pair(anchor, neg.data(), h, 0.0, nullptr, nullptr);
                terms[nt++] = s / tau;
                neg_total += s;
                ++neg_count;
            }
        }
        double m = t0;
        for (size_t t = 0; t < nt; ++t) m = std::max(m, terms[t]);
        double z = std::exp(t0 - m);
        for (size_t t = 0; t < nt; ++t) z += std::exp(terms[t] - m);
        double lse = m + std::log(z);
        loss += lse - t0;

        if (grx || gry) {
            double w = gscale / static_cast<double>(b);
            double* grxi = grx ? grx->data.data() + i * h : nullptr;
            double* gryi = gry ? gry->data.data() + i * h : nullptr;
            // Positive term: coefficient (p0 - 1) / tau.
            double p0 = std::exp(t0 - lse);
            cos_pair(rxi, ryi, h, w * (p0 - 1.0) / tau, grxi, gryi);
            nt = 0;
            for (int64_t j = 0; j < b; ++j) {
                if (j == i) continue;
                for (int side = 0; side < 2; ++side) {
                    const Tensor& r = side == 0 ? ry : rx;
                    const Tensor& lam = side == 0 ? ly : lx;
                    Tensor* gr = side == 0 ? gry : grx;
                    const double* anchor = r.data.data() + i * h;
                    const double* other = r.data.data() + j * h;
                    double l = lam.at(i, j);
                    for (int64_t d = 0; d < h; ++d)
                        neg[static_cast<size_t>(d)] = anchor[d] + l * (other[d] - anchor[d]);
                    double p = std::exp(terms[nt++] - lse);
                    double coeff = w * p / tau;
                    std::fill(gneg.begin(), gneg.end(), 0.0);
                    double* ganchor = gr ? gr->data.data() + i * h : nullptr;
                    cos_pair(anchor, neg.data(), h, coeff, ganchor, gneg.data());
                    if (gr) {
                        // Negative depends on both endpoints of the segment.
                        double* gother = gr->data.data() + j * h;
                        for (int64_t d = 0; d < h; ++d) {
                            ganchor[d] += (1.0 - l) * gneg[static_cast<size_t>(d)];
                            gother[d] += l * gneg[static_cast<size_t>(d)];
                        }
                    }
                }
            }
        }
    }
    if (diag) {
        diag->mean_pos_sim = pos_total / static_cast<double>(b);
        diag->mean_neg_sim = neg_count > 0 ? neg_total / static_cast<double>(neg_count) : 0.0;
    }
    return loss / static_cast<double>(b);
}

} // namespace

NegativeSample interpolate_negative(const Tensor& r_i, const Tensor& r_j, double d,
                                    double lambda_floor, Rng& rng) {
    if (d < 0.0) throw PreconditionError("interpolate_negative: d must be nonnegative");
    double d_prime = l2_distance(r_i, r_j);
    NegativeSample out;
    if (d_prime > d) {
        double lo = std::max(d / d_prime, lambda_floor);
        // (lo, 1]: complement of a [0,1) draw keeps the upper endpoint closed.
        out.lambda = 1.0 - rng.uniform() * (1.0 - lo);
        out.interpolated = true;
        out.vec = r_i;
        for (int64_t k = 0; k < out.vec.numel(); ++k)
            out.vec[k] += out.lambda * (r_j[k] - r_i[k]);
    } else {
        out.vec = r_j;
    }
    return out;
}

NodeId ctl_loss(Tape& tape, NodeId rx, NodeId ry, const CtlConfig& cfg, Rng& rng, CtlDiag* diag,
                const Tensor* fixed_lx, const Tensor* fixed_ly) {
    cfg.validate();
    const Tensor& vx = tape.value(rx);
    const Tensor& vy = tape.value(ry);
    check_same_shape(vx, vy, "ctl_loss");
    int64_t b = vx.rows(), h = vx.cols();
    if (b < 1) throw PreconditionError("ctl_loss: empty batch");

    auto lx = std::make_shared<Tensor>(std::vector<int64_t>{b, b});
    auto ly = std::make_shared<Tensor>(std::vector<int64_t>{b, b});
    if (fixed_lx && fixed_ly) {
        *lx = *fixed_lx;
        *ly = *fixed_ly;
    } else {
        // Same traversal order as the evaluation: i, then j, y before x.
        for (int64_t i = 0; i < b; ++i) {
            const double* rxi = vx.data.data() + i * h;
            const double* ryi = vy.data.data() + i * h;
            double d = 0.0;
            for (int64_t k = 0; k < h; ++k) {
                double diff = rxi[k] - ryi[k];
                d += diff * diff;
            }
            d = std::sqrt(d);
            for (int64_t j = 0; j < b; ++j) {
                if (j == i) continue;
                for (int side = 0; side < 2; ++side) {
                    const Tensor& r = side == 0 ? vy : vx;
                    Tensor& lam = side == 0 ? *ly : *lx;
                    const double* a = r.data.data() + i * h;
                    const double* o = r.data.data() + j * h;
                    double dp = 0.0;
                    for (int64_t k = 0; k < h; ++k) {
                        double diff = a[k] - o[k];
                        dp += diff * diff;
                    }
                    dp = std::sqrt(dp);
                    if (dp > d) {
                        double lo = std::max(d / dp, cfg.lambda_floor);
                        lam.at(i, j) = 1.0 - rng.uniform() * (1.0 - lo);
                    } else {
                        lam.at(i, j) = 1.0;
                    }
                }
            }
        }
    }
    if (diag) {
        diag->lambda_x = *lx;
        diag->lambda_y = *ly;
    }

    double loss = ctl_eval(vx, vy, *lx, *ly, cfg.tau, 0.0, nullptr, nullptr, diag);
    double tau = cfg.tau;
    return tape.custom(Tensor::scalar(loss), [rx, ry, lx, ly, tau](Tape& t, const Tensor& g) {
        ctl_eval(t.value(rx), t.value(ry), *lx, *ly, tau, g[0], &t.grad_buffer(rx),
                 &t.grad_buffer(ry), nullptr);
    });
}

NodeId cosine_loss(Tape& tape, NodeId rx, NodeId ry) {
    return tape.scale(tape.mean_all(tape.cos_rows(rx, ry)), -1.0);
}

} // namespace csanmt
