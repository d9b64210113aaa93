#include "csanmt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace csanmt {

NodeId Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> backward) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, bool needs_grad) {
    (void)needs_grad; // leaves differ from constants only in whether callers read their grad
    return push(std::move(value), nullptr);
}

NodeId Tape::custom(Tensor value, std::function<void(Tape&, const Tensor&)> backward) {
    return push(std::move(value), std::move(backward));
}

Tensor& Tape::grad_buffer(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor(n.value.shape);
    return n.grad;
}

void Tape::add_grad(NodeId id, const Tensor& g) {
    Tensor& buf = grad_buffer(id);
    for (int64_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

void Tape::add_grad_scaled(NodeId id, const Tensor& g, double s) {
    Tensor& buf = grad_buffer(id);
    for (int64_t i = 0; i < g.numel(); ++i) buf[i] += s * g[i];
}

const Tensor& Tape::grad(NodeId id) {
    return grad_buffer(id);
}

void Tape::backward(NodeId target) {
    if (!grad_enabled_) throw PreconditionError("backward on a grad-disabled tape");
    const Tensor& tv = value(target);
    if (tv.numel() != 1) throw DimError("backward target must be scalar, got " + tv.shape_str());
    grad_buffer(target)[0] = 1.0;
    for (size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.data.empty()) continue;
        n.backward(*this, n.grad);
    }
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
        t.add_grad(a, g);
        t.add_grad(b, g);
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
        t.add_grad(a, g);
        t.add_grad_scaled(b, g, -1.0);
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        const Tensor& vb2 = t.value(b);
        Tensor& ga = t.grad_buffer(a);
        Tensor& gb = t.grad_buffer(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * vb2[i];
            gb[i] += g[i] * va[i];
        }
    });
}

NodeId Tape::scale(NodeId a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    return push(std::move(out), [a, s](Tape& t, const Tensor& g) {
        t.add_grad_scaled(a, g, s);
    });
}

NodeId Tape::relu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [a](Tape& t, const Tensor& g) {
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (va[i] > 0.0) ga[i] += g[i];
    });
}

NodeId Tape::add_rowvec(NodeId x, NodeId v) {
    const Tensor& vx = value(x);
    const Tensor& vv = value(v);
    if (vv.ndim() != 1 || vv.numel() != vx.cols())
        throw DimError("add_rowvec: vector " + vv.shape_str() + " vs matrix " + vx.shape_str());
    Tensor out = vx;
    int64_t r = out.rows(), c = out.cols();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) += vv[j];
    return push(std::move(out), [x, v, r, c](Tape& t, const Tensor& g) {
        t.add_grad(x, g);
        Tensor& gv = t.grad_buffer(v);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) gv[j] += g.at(i, j);
    });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.shape[1] != vb.shape[0])
        throw DimError("matmul: " + va.shape_str() + " x " + vb.shape_str());
    int64_t m = va.shape[0], k = va.shape[1], n = vb.shape[1];
    Tensor out({m, n});
    detail::mm_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n, true);
    return push(std::move(out), [a, b, m, k, n](Tape& t, const Tensor& g) {
        const Tensor& va2 = t.value(a);
        const Tensor& vb2 = t.value(b);
        detail::mm_nt_acc(g.data.data(), vb2.data.data(), t.grad_buffer(a).data.data(), m, n, k);
        detail::mm_tn_acc(va2.data.data(), g.data.data(), t.grad_buffer(b).data.data(), m, k, n);
    });
}

NodeId Tape::softmax_rows(NodeId x) {
    Tensor out = value(x);
    int64_t r = out.rows(), c = out.cols();
    if (c == 0) throw DimError("softmax_rows: empty rows");
    for (int64_t i = 0; i < r; ++i) {
        double* row = out.data.data() + i * c;
        double m = *std::max_element(row, row + c);
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - m);
            s += row[j];
        }
        for (int64_t j = 0; j < c; ++j) row[j] /= s;
    }
    NodeId id = push(std::move(out), nullptr);
    nodes_.back().backward = [x, id, r, c](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(id);
        Tensor& gx = t.grad_buffer(x);
        for (int64_t i = 0; i < r; ++i) {
            double dotgy = 0.0;
            for (int64_t j = 0; j < c; ++j) dotgy += g.at(i, j) * y.at(i, j);
            for (int64_t j = 0; j < c; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dotgy);
        }
    };
    return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& vx = value(x);
    const Tensor& vg = value(gain);
    const Tensor& vb = value(bias);
    int64_t r = vx.rows(), c = vx.cols();
    if (vg.numel() != c || vb.numel() != c)
        throw DimError("layer_norm: gain/bias width mismatch");
    Tensor out(vx.shape);
    Tensor xhat(vx.shape);
    std::vector<double> istd(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const double* row = vx.data.data() + i * c;
        double mu = 0.0;
        for (int64_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        istd[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < c; ++j) {
            double xh = (row[j] - mu) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = vg[j] * xh + vb[j];
        }
    }
    return push(std::move(out),
                [x, gain, bias, xhat = std::move(xhat), istd = std::move(istd), r, c](
                    Tape& t, const Tensor& g) {
                    const Tensor& vg2 = t.value(gain);
                    Tensor& gx = t.grad_buffer(x);
                    Tensor& gg = t.grad_buffer(gain);
                    Tensor& gb = t.grad_buffer(bias);
                    double inv_c = 1.0 / static_cast<double>(c);
                    for (int64_t i = 0; i < r; ++i) {
                        double mean_gy = 0.0, mean_gyxh = 0.0;
                        for (int64_t j = 0; j < c; ++j) {
                            double gy = g.at(i, j) * vg2[j];
                            mean_gy += gy;
                            mean_gyxh += gy * xhat.at(i, j);
                        }
                        mean_gy *= inv_c;
                        mean_gyxh *= inv_c;
                        double is = istd[static_cast<size_t>(i)];
                        for (int64_t j = 0; j < c; ++j) {
                            double gy = g.at(i, j) * vg2[j];
                            gx.at(i, j) += is * (gy - mean_gy - xhat.at(i, j) * mean_gyxh);
                            gg[j] += g.at(i, j) * xhat.at(i, j);
                            gb[j] += g.at(i, j);
                        }
                    }
                });
}

NodeId Tape::embedding(NodeId table, const std::vector<int>& ids) {
    const Tensor& vt = value(table);
    if (vt.ndim() != 2) throw DimError("embedding: table must be 2-D");
    int64_t v = vt.shape[0], h = vt.shape[1];
    Tensor out({static_cast<int64_t>(ids.size()), h});
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || id >= v) throw PreconditionError("embedding: id out of range");
        std::copy_n(vt.data.data() + static_cast<int64_t>(id) * h, h,
                    out.data.data() + static_cast<int64_t>(i) * h);
    }
    return push(std::move(out), [table, ids, h](Tape& t, const Tensor& g) {
        Tensor& gt = t.grad_buffer(table);
        for (size_t i = 0; i < ids.size(); ++i) {
            double* dst = gt.data.data() + static_cast<int64_t>(ids[i]) * h;
            const double* src = g.data.data() + static_cast<int64_t>(i) * h;
            for (int64_t j = 0; j < h; ++j) dst[j] += src[j];
        }
    });
}

NodeId Tape::gather_rows(NodeId x, std::vector<int> index) {
    const Tensor& vx = value(x);
    int64_t c = vx.cols(), r = vx.rows();
    Tensor out({static_cast<int64_t>(index.size()), c});
    for (size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= r) throw PreconditionError("gather_rows: index out of range");
        std::copy_n(vx.data.data() + static_cast<int64_t>(index[i]) * c, c,
                    out.data.data() + static_cast<int64_t>(i) * c);
    }
    return push(std::move(out), [x, index = std::move(index), c](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (size_t i = 0; i < index.size(); ++i) {
            double* dst = gx.data.data() + static_cast<int64_t>(index[i]) * c;
            const double* src = g.data.data() + static_cast<int64_t>(i) * c;
            for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
        }
    });
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.cols() != vb.cols()) throw DimError("concat_rows: width mismatch");
    int64_t ra = va.rows(), rb = vb.rows(), c = va.cols();
    Tensor out({ra + rb, c});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + ra * c);
    return push(std::move(out), [a, b, ra, rb, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        Tensor& gb = t.grad_buffer(b);
        for (int64_t i = 0; i < ra * c; ++i) ga[i] += g[i];
        for (int64_t i = 0; i < rb * c; ++i) gb[i] += g[ra * c + i];
    });
}

NodeId Tape::mean_pool(NodeId x, const BatchSpec& spec) {
    const Tensor& vx = value(x);
    int64_t c = vx.cols();
    if (vx.rows() != spec.total_rows()) throw DimError("mean_pool: rows vs batch spec");
    Tensor out({spec.n_seq, c});
    for (int b = 0; b < spec.n_seq; ++b) {
        int len = spec.lens[static_cast<size_t>(b)];
        if (len <= 0) throw PreconditionError("mean_pool: empty sequence");
        for (int tPos = 0; tPos < len; ++tPos) {
            const double* row = vx.data.data() + (static_cast<int64_t>(b) * spec.stride + tPos) * c;
            for (int64_t j = 0; j < c; ++j) out.at(b, j) += row[j];
        }
        for (int64_t j = 0; j < c; ++j) out.at(b, j) /= static_cast<double>(len);
    }
    return push(std::move(out), [x, spec, c](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (int b = 0; b < spec.n_seq; ++b) {
            int len = spec.lens[static_cast<size_t>(b)];
            double inv = 1.0 / static_cast<double>(len);
            for (int tPos = 0; tPos < len; ++tPos) {
                double* dst = gx.data.data() + (static_cast<int64_t>(b) * spec.stride + tPos) * c;
                for (int64_t j = 0; j < c; ++j) dst[j] += g.at(b, j) * inv;
            }
        }
    });
}

NodeId Tape::mean_all(NodeId x) {
    const Tensor& vx = value(x);
    if (vx.numel() == 0) throw PreconditionError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : vx.data) s += v;
    double inv = 1.0 / static_cast<double>(vx.numel());
    return push(Tensor::scalar(s * inv), [x, inv](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        double gv = g[0] * inv;
        for (double& v : gx.data) v += gv;
    });
}

NodeId Tape::cos_rows(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "cos_rows");
    int64_t r = va.rows(), c = va.cols();
    Tensor out({r});
    std::vector<double> nas(static_cast<size_t>(r)), nbs(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        double sa = 0.0, sb = 0.0, sab = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double x = va.at(i, j), y = vb.at(i, j);
            sa += x * x;
            sb += y * y;
            sab += x * y;
        }
        double na = std::sqrt(sa), nb = std::sqrt(sb);
        if (na == 0.0 || nb == 0.0) throw NumericError("cos_rows: zero-norm row");
        nas[static_cast<size_t>(i)] = na;
        nbs[static_cast<size_t>(i)] = nb;
        out[i] = sab / ((na + kCosineEps) * (nb + kCosineEps));
    }
    return push(std::move(out),
                [a, b, nas = std::move(nas), nbs = std::move(nbs), r, c](Tape& t, const Tensor& g) {
                    const Tensor& va2 = t.value(a);
                    const Tensor& vb2 = t.value(b);
                    Tensor& ga = t.grad_buffer(a);
                    Tensor& gb = t.grad_buffer(b);
                    for (int64_t i = 0; i < r; ++i) {
                        double na = nas[static_cast<size_t>(i)] + kCosineEps;
                        double nb = nbs[static_cast<size_t>(i)] + kCosineEps;
                        double sab = 0.0;
                        for (int64_t j = 0; j < c; ++j) sab += va2.at(i, j) * vb2.at(i, j);
                        double cos_v = sab / (na * nb);
                        double gi = g[i];
                        for (int64_t j = 0; j < c; ++j) {
                            double x = va2.at(i, j), y = vb2.at(i, j);
                            ga.at(i, j) += gi * (y / (na * nb) -
                                                 cos_v * x / (na * nas[static_cast<size_t>(i)]));
                            gb.at(i, j) += gi * (x / (na * nb) -
                                                 cos_v * y / (nb * nbs[static_cast<size_t>(i)]));
                        }
                    }
                });
}

NodeId Tape::l2norm(NodeId x) {
    const Tensor& vx = value(x);
    double s = 0.0;
    for (double v : vx.data) s += v * v;
    double n = std::sqrt(s);
    return push(Tensor::scalar(n), [x, n](Tape& t, const Tensor& g) {
        const Tensor& vx2 = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        double scale = g[0] / std::max(n, 1e-300);
        for (int64_t i = 0; i < vx2.numel(); ++i) gx[i] += scale * vx2[i];
    });
}

NodeId Tape::attention(NodeId q, NodeId k, NodeId v, const AttnSpec& spec) {
    const Tensor& vq = value(q);
    const Tensor& vk = value(k);
    const Tensor& vv = value(v);
    int64_t h = vq.cols();
    if (vk.cols() != h || vv.cols() != h) throw DimError("attention: width mismatch");
    if (h % spec.heads != 0) throw DimError("attention: heads must divide hidden width");
    if (vq.rows() != spec.q.total_rows() || vk.rows() != spec.kv.total_rows())
        throw DimError("attention: rows vs batch spec");
    if (spec.causal && (!spec.kv_of.empty() || spec.q.n_seq != spec.kv.n_seq))
        throw PreconditionError("attention: causal masking requires self-attention geometry");
    int64_t dh = h / spec.heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    int tq = spec.q.stride, tk = spec.kv.stride;

    // Softmax rows are cached for backward; masked entries stay exact zeros.
    auto probs = std::make_shared<std::vector<Tensor>>(
        static_cast<size_t>(spec.q.n_seq) * spec.heads, Tensor({tq, tk}));

    Tensor out({vq.rows(), h});
    for (int qs = 0; qs < spec.q.n_seq; ++qs) {
        int ks = spec.kv_of.empty() ? qs : spec.kv_of[static_cast<size_t>(qs)];
        if (ks < 0 || ks >= spec.kv.n_seq) throw PreconditionError("attention: kv_of out of range");
        int qlen = spec.q.lens[static_cast<size_t>(qs)];
        int klen = spec.kv.lens[static_cast<size_t>(ks)];
        if (klen <= 0) throw PreconditionError("attention: empty key sequence");
        for (int head = 0; head < spec.heads; ++head) {
            Tensor& a = (*probs)[static_cast<size_t>(qs) * spec.heads + head];
            int64_t off = head * dh;
            for (int tPos = 0; tPos < qlen; ++tPos) {
                const double* qrow = vq.data.data() + (static_cast<int64_t>(qs) * tq + tPos) * h + off;
                int jmax = spec.causal ? std::min(tPos + 1, klen) : klen;
                double m = -1e300;
                for (int j = 0; j < jmax; ++j) {
                    const double* krow = vk.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                    double s = 0.0;
                    for (int64_t d = 0; d < dh; ++d) s += qrow[d] * krow[d];
                    s *= inv_sqrt;
                    a.at(tPos, j) = s;
                    m = std::max(m, s);
                }
                double z = 0.0;
                for (int j = 0; j < jmax; ++j) {
                    double e = std::exp(a.at(tPos, j) - m);
                    a.at(tPos, j) = e;
                    z += e;
                }
                double* orow = out.data.data() + (static_cast<int64_t>(qs) * tq + tPos) * h + off;
                for (int j = 0; j < jmax; ++j) {
                    double p = a.at(tPos, j) / z;
                    a.at(tPos, j) = p;
                    const double* vrow = vv.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                    for (int64_t d = 0; d < dh; ++d) orow[d] += p * vrow[d];
                }
            }
        }
    }

    return push(std::move(out), [q, k, v, spec, probs, dh, inv_sqrt, h, tq, tk](Tape& t,
                                                                                const Tensor& g) {
        const Tensor& vq2 = t.value(q);
        const Tensor& vk2 = t.value(k);
        const Tensor& vv2 = t.value(v);
        Tensor& gq = t.grad_buffer(q);
        Tensor& gk = t.grad_buffer(k);
        Tensor& gv = t.grad_buffer(v);
        std::vector<double> da(static_cast<size_t>(tk));
        for (int qs = 0; qs < spec.q.n_seq; ++qs) {
            int ks = spec.kv_of.empty() ? qs : spec.kv_of[static_cast<size_t>(qs)];
            int qlen = spec.q.lens[static_cast<size_t>(qs)];
            int klen = spec.kv.lens[static_cast<size_t>(ks)];
            for (int head = 0; head < spec.heads; ++head) {
                const Tensor& a = (*probs)[static_cast<size_t>(qs) * spec.heads + head];
                int64_t off = head * dh;
                for (int tPos = 0; tPos < qlen; ++tPos) {
                    const double* grow = g.data.data() + (static_cast<int64_t>(qs) * tq + tPos) * h + off;
                    int jmax = spec.causal ? std::min(tPos + 1, klen) : klen;
                    double dot_da_a = 0.0;
                    for (int j = 0; j < jmax; ++j) {
                        const double* vrow =
                            vv2.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                        double* gvrow =
                            gv.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                        double p = a.at(tPos, j);
                        double d = 0.0;
                        for (int64_t dd = 0; dd < dh; ++dd) {
                            d += grow[dd] * vrow[dd];
                            gvrow[dd] += p * grow[dd];
                        }
                        da[static_cast<size_t>(j)] = d;
                        dot_da_a += d * p;
                    }
                    const double* qrow =
                        vq2.data.data() + (static_cast<int64_t>(qs) * tq + tPos) * h + off;
                    double* gqrow =
                        gq.data.data() + (static_cast<int64_t>(qs) * tq + tPos) * h + off;
                    for (int j = 0; j < jmax; ++j) {
                        double ds = a.at(tPos, j) * (da[static_cast<size_t>(j)] - dot_da_a) * inv_sqrt;
                        if (ds == 0.0) continue;
                        const double* krow =
                            vk2.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                        double* gkrow =
                            gk.data.data() + (static_cast<int64_t>(ks) * tk + j) * h + off;
                        for (int64_t dd = 0; dd < dh; ++dd) {
                            gqrow[dd] += ds * krow[dd];
                            gkrow[dd] += ds * qrow[dd];
                        }
                    }
                }
            }
        }
    });
}

NodeId Tape::cross_entropy_rows(NodeId logits, const std::vector<int>& gold,
                                const std::vector<double>& weight, double smooth_eps) {
    const Tensor& vl = value(logits);
    int64_t r = vl.rows(), c = vl.cols();
    if (static_cast<int64_t>(gold.size()) != r || static_cast<int64_t>(weight.size()) != r)
        throw DimError("cross_entropy_rows: gold/weight length vs logits rows");
    double wtot = 0.0;
    for (double w : weight) {
        if (w < 0.0) throw PreconditionError("cross_entropy_rows: negative weight");
        wtot += w;
    }
    if (wtot <= 0.0) throw PreconditionError("cross_entropy_rows: zero total weight");

    // Cache softmax probabilities of weighted rows for the backward pass.
    auto probs = std::make_shared<Tensor>(vl.shape);
    double loss = 0.0;
    double uni = smooth_eps / static_cast<double>(c);
    for (int64_t i = 0; i < r; ++i) {
        if (weight[static_cast<size_t>(i)] == 0.0) continue;
        int gid = gold[static_cast<size_t>(i)];
        if (gid < 0 || gid >= c) throw PreconditionError("cross_entropy_rows: gold id out of range");
        const double* row = vl.data.data() + i * c;
        double m = *std::max_element(row, row + c);
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        double lz = m + std::log(z);
        double row_loss = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double logp = row[j] - lz;
            probs->at(i, j) = std::exp(logp);
            double target = uni + (j == gid ? 1.0 - smooth_eps : 0.0);
            if (target != 0.0) row_loss -= target * logp;
        }
        loss += weight[static_cast<size_t>(i)] * row_loss;
    }
    loss /= wtot;

    return push(Tensor::scalar(loss),
                [logits, gold, weight, smooth_eps, probs, wtot, r, c, uni](Tape& t, const Tensor& g) {
                    Tensor& gl = t.grad_buffer(logits);
                    double gs = g[0] / wtot;
                    for (int64_t i = 0; i < r; ++i) {
                        double w = weight[static_cast<size_t>(i)];
                        if (w == 0.0) continue;
                        int gid = gold[static_cast<size_t>(i)];
                        double f = gs * w;
                        for (int64_t j = 0; j < c; ++j) {
                            double target = uni + (j == gid ? 1.0 - smooth_eps : 0.0);
                            gl.at(i, j) += f * (probs->at(i, j) - target);
                        }
                    }
                });
}

} // namespace csanmt
