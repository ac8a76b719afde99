#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "vitfill/tensor.hpp"

namespace vitfill {

inline constexpr double kLayerNormEps = 1e-5;

// Reverse-mode tape. Operations append nodes in creation order; backward()
// walks them exactly once in reverse. One tape serves one forward/backward
// pass and is never shared between threads.
//
// Reductions (softmax denominators, means/variances, losses) accumulate in
// double regardless of T.
template <typename T>
class Tape {
public:
    struct Var {
        std::int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    Var param(Tensor<T> value) { return push(std::move(value), recording_, nullptr); }

    const Tensor<T>& value(Var v) const { return slots_[check(v)].value; }

    // Gradient of the last backward() target w.r.t. v. Zero tensor if v was
    // never touched by the loss.
    Tensor<T> grad(Var v) const {
        const std::size_t i = check(v);
        if (grads_.size() == slots_.size() && grads_[i].numel() > 0) return grads_[i];
        return Tensor<T>::zeros(slots_[i].value.shape);
    }

    void backward(Var loss) {
        const std::size_t li = check(loss);
        if (slots_[li].value.numel() != 1)
            throw ValidationError("backward: loss must be a scalar, got shape " +
                                  slots_[li].value.shape_string());
        if (!recording_) throw ValidationError("backward: tape is not recording");
        grads_.assign(slots_.size(), Tensor<T>{});
        grads_[li] = Tensor<T>::scalar(T(1));
        for (std::int32_t i = static_cast<std::int32_t>(li); i >= 0; --i) {
            if (slots_[i].backward && grads_[i].numel() > 0) slots_[i].backward(*this, i);
        }
    }

    // ---- elementwise -------------------------------------------------------

    Var add(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        require_same_shape(av, bv, "add");
        Tensor<T> out = av;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        return push(std::move(out), wants(a) || wants(b),
                    [a = a.id, b = b.id](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        if (t.wants_id(a)) {
                            T* da = t.grad_ptr(a);
                            for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i];
                        }
                        if (t.wants_id(b)) {
                            T* db = t.grad_ptr(b);
                            for (std::size_t i = 0; i < g.data.size(); ++i) db[i] += g.data[i];
                        }
                    });
    }

    Var sub(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        require_same_shape(av, bv, "sub");
        Tensor<T> out = av;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
        return push(std::move(out), wants(a) || wants(b),
                    [a = a.id, b = b.id](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        if (t.wants_id(a)) {
                            T* da = t.grad_ptr(a);
                            for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i];
                        }
                        if (t.wants_id(b)) {
                            T* db = t.grad_ptr(b);
                            for (std::size_t i = 0; i < g.data.size(); ++i) db[i] -= g.data[i];
                        }
                    });
    }

    // Hadamard product.
    Var mul(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        require_same_shape(av, bv, "mul");
        Tensor<T> out = av;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
        return push(std::move(out), wants(a) || wants(b),
                    [a = a.id, b = b.id](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        const auto& av2 = t.slots_[a].value;
                        const auto& bv2 = t.slots_[b].value;
                        if (t.wants_id(a)) {
                            T* da = t.grad_ptr(a);
                            for (std::size_t i = 0; i < g.data.size(); ++i)
                                da[i] += g.data[i] * bv2.data[i];
                        }
                        if (t.wants_id(b)) {
                            T* db = t.grad_ptr(b);
                            for (std::size_t i = 0; i < g.data.size(); ++i)
                                db[i] += g.data[i] * av2.data[i];
                        }
                    });
    }

    Var scale(Var a, T s) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v *= s;
        return push(std::move(out), wants(a), [a = a.id, s](Tape& t, int o) {
            const auto& g = t.grads_[o];
            if (!t.wants_id(a)) return;
            T* da = t.grad_ptr(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i] * s;
        });
    }

    Var relu(Var a) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v = v > T(0) ? v : T(0);
        return push(std::move(out), wants(a), [a = a.id](Tape& t, int o) {
            if (!t.wants_id(a)) return;
            const auto& g = t.grads_[o];
            const auto& x = t.slots_[a].value;
            T* da = t.grad_ptr(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (x.data[i] > T(0)) da[i] += g.data[i];
        });
    }

    // tanh-approximation GELU; odd-symmetric, gelu(0) == 0.
    Var gelu(Var a) {
        Tensor<T> out = value(a);
        for (T& v : out.data) {
            const T u = kGeluC0 * (v + kGeluC1 * v * v * v);
            v = T(0.5) * v * (T(1) + std::tanh(u));
        }
        return push(std::move(out), wants(a), [a = a.id](Tape& t, int o) {
            if (!t.wants_id(a)) return;
            const auto& g = t.grads_[o];
            const auto& xs = t.slots_[a].value;
            T* da = t.grad_ptr(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                const T x = xs.data[i];
                const T u = kGeluC0 * (x + kGeluC1 * x * x * x);
                const T th = std::tanh(u);
                const T d = T(0.5) * (T(1) + th) +
                            T(0.5) * x * (T(1) - th * th) * kGeluC0 * (T(1) + T(3) * kGeluC1 * x * x);
                da[i] += g.data[i] * d;
            }
        });
    }

    // ---- linear algebra ----------------------------------------------------

    Var matmul(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        check_2d(av, "matmul");
        check_2d(bv, "matmul");
        if (av.shape[1] != bv.shape[0])
            throw DimensionError("matmul: inner dimensions disagree: " + av.shape_string() +
                                 " vs " + bv.shape_string());
        const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), wants(a) || wants(b),
                    [a = a.id, b = b.id, m, k, n](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        if (t.wants_id(a))
                            gemm_nt(g.data.data(), t.slots_[b].value.data.data(), t.grad_ptr(a), m,
                                    n, k);
                        if (t.wants_id(b))
                            gemm_tn(t.slots_[a].value.data.data(), g.data.data(), t.grad_ptr(b), m,
                                    k, n);
                    });
    }

    // a[MxK] * b[NxK]^T -> [MxN]
    Var matmul_nt(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        check_2d(av, "matmul_nt");
        check_2d(bv, "matmul_nt");
        if (av.shape[1] != bv.shape[1])
            throw DimensionError("matmul_nt: inner dimensions disagree: " + av.shape_string() +
                                 " vs " + bv.shape_string());
        const int m = av.shape[0], k = av.shape[1], n = bv.shape[0];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        gemm_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), wants(a) || wants(b),
                    [a = a.id, b = b.id, m, k, n](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        if (t.wants_id(a))
                            gemm_nn(g.data.data(), t.slots_[b].value.data.data(), t.grad_ptr(a), m,
                                    n, k);
                        if (t.wants_id(b))
                            gemm_tn(g.data.data(), t.slots_[a].value.data.data(), t.grad_ptr(b), m,
                                    n, k);
                    });
    }

    // a[MxN] + bias[N] broadcast over rows.
    Var add_row_bias(Var a, Var bias) {
        const auto& av = value(a);
        const auto& bv = value(bias);
        check_2d(av, "add_row_bias");
        if (bv.shape.size() != 1 || bv.shape[0] != av.shape[1])
            throw DimensionError("add_row_bias: bias " + bv.shape_string() +
                                 " does not match columns of " + av.shape_string());
        const int m = av.shape[0], n = av.shape[1];
        Tensor<T> out = av;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(i) * n + j] += bv.data[j];
        return push(std::move(out), wants(a) || wants(bias),
                    [a = a.id, b = bias.id, m, n](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        if (t.wants_id(a)) {
                            T* da = t.grad_ptr(a);
                            for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i];
                        }
                        if (t.wants_id(b)) {
                            T* db = t.grad_ptr(b);
                            for (int j = 0; j < n; ++j) {
                                double s = 0.0;
                                for (int i = 0; i < m; ++i)
                                    s += static_cast<double>(
                                        g.data[static_cast<std::size_t>(i) * n + j]);
                                db[j] += static_cast<T>(s);
                            }
                        }
                    });
    }

    // Row-wise softmax with max subtraction; denominators accumulate in double.
    Var softmax_rows(Var a) {
        const auto& av = value(a);
        check_2d(av, "softmax_rows");
        require_finite(av, "softmax_rows");
        const int m = av.shape[0], n = av.shape[1];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        std::vector<double> e(static_cast<std::size_t>(n));
        for (int i = 0; i < m; ++i) {
            const T* row = av.data.data() + static_cast<std::size_t>(i) * n;
            T mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                e[j] = std::exp(static_cast<double>(row[j] - mx));
                denom += e[j];
            }
            T* orow = out.data.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] = static_cast<T>(e[j] / denom);
        }
        return push(std::move(out), wants(a), [a = a.id, m, n](Tape& t, int o) {
            if (!t.wants_id(a)) return;
            const auto& g = t.grads_[o];
            const auto& y = t.slots_[o].value;
            T* da = t.grad_ptr(a);
            for (int i = 0; i < m; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j)
                    dot += static_cast<double>(g.data[base + j]) *
                           static_cast<double>(y.data[base + j]);
                for (int j = 0; j < n; ++j)
                    da[base + j] +=
                        y.data[base + j] * (g.data[base + j] - static_cast<T>(dot));
            }
        });
    }

    // Per-row normalization to zero mean / unit variance, then affine.
    Var layer_norm(Var a, Var gamma, Var beta, double eps) {
        const auto& av = value(a);
        const auto& gv = value(gamma);
        const auto& bv = value(beta);
        check_2d(av, "layer_norm");
        const int m = av.shape[0], n = av.shape[1];
        if (gv.shape.size() != 1 || gv.shape[0] != n || bv.shape.size() != 1 || bv.shape[0] != n)
            throw DimensionError("layer_norm: affine shapes " + gv.shape_string() + "/" +
                                 bv.shape_string() + " do not match row width of " +
                                 av.shape_string());
        if (eps <= 0.0) throw ValidationError("layer_norm: eps must be positive");
        auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::zeros({m, n}));
        auto inv_s = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
        Tensor<T> out = Tensor<T>::zeros({m, n});
        for (int i = 0; i < m; ++i) {
            const std::size_t base = static_cast<std::size_t>(i) * n;
            double mean = 0.0;
            for (int j = 0; j < n; ++j) mean += static_cast<double>(av.data[base + j]);
            mean /= n;
            double var = 0.0;
            for (int j = 0; j < n; ++j) {
                const double d = static_cast<double>(av.data[base + j]) - mean;
                var += d * d;
            }
            var /= n;
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_s)[i] = is;
            for (int j = 0; j < n; ++j) {
                const double xh = (static_cast<double>(av.data[base + j]) - mean) * is;
                xhat->data[base + j] = static_cast<T>(xh);
                out.data[base + j] =
                    gv.data[j] * xhat->data[base + j] + bv.data[j];
            }
        }
        return push(std::move(out), wants(a) || wants(gamma) || wants(beta),
                    [a = a.id, ga = gamma.id, be = beta.id, m, n, xhat, inv_s](Tape& t, int o) {
                        const auto& g = t.grads_[o];
                        const auto& gv2 = t.slots_[ga].value;
                        if (t.wants_id(ga) || t.wants_id(be)) {
                            T* dga = t.wants_id(ga) ? t.grad_ptr(ga) : nullptr;
                            T* dbe = t.wants_id(be) ? t.grad_ptr(be) : nullptr;
                            for (int j = 0; j < n; ++j) {
                                double sg = 0.0, sb = 0.0;
                                for (int i = 0; i < m; ++i) {
                                    const std::size_t k = static_cast<std::size_t>(i) * n + j;
                                    sg += static_cast<double>(g.data[k]) *
                                          static_cast<double>(xhat->data[k]);
                                    sb += static_cast<double>(g.data[k]);
                                }
                                if (dga) dga[j] += static_cast<T>(sg);
                                if (dbe) dbe[j] += static_cast<T>(sb);
                            }
                        }
                        if (t.wants_id(a)) {
                            T* da = t.grad_ptr(a);
                            for (int i = 0; i < m; ++i) {
                                const std::size_t base = static_cast<std::size_t>(i) * n;
                                double m1 = 0.0, m2 = 0.0;
                                for (int j = 0; j < n; ++j) {
                                    const double dxh = static_cast<double>(g.data[base + j]) *
                                                       static_cast<double>(gv2.data[j]);
                                    m1 += dxh;
                                    m2 += dxh * static_cast<double>(xhat->data[base + j]);
                                }
                                m1 /= n;
                                m2 /= n;
                                for (int j = 0; j < n; ++j) {
                                    const double dxh = static_cast<double>(g.data[base + j]) *
                                                       static_cast<double>(gv2.data[j]);
                                    da[base + j] += static_cast<T>(
                                        (dxh - m1 -
                                         static_cast<double>(xhat->data[base + j]) * m2) *
                                        (*inv_s)[i]);
                                }
                            }
                        }
                    });
    }

    // ---- convolution (3x3, stride 1, pad 1) --------------------------------

    Var conv2d(Var x, Var weight, Var bias) {
        const auto& xv = value(x);
        const auto& wv = value(weight);
        const auto& bv = value(bias);
        if (xv.shape.size() != 3)
            throw DimensionError("conv2d: input must be CxHxW, got " + xv.shape_string());
        if (wv.shape.size() != 4 || wv.shape[2] != 3 || wv.shape[3] != 3)
            throw DimensionError("conv2d: weight must be [out,in,3,3], got " + wv.shape_string());
        const int cin = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
        const int cout = wv.shape[0];
        if (wv.shape[1] != cin)
            throw DimensionError("conv2d: input channels " + xv.shape_string() +
                                 " do not match weight " + wv.shape_string());
        if (bv.shape.size() != 1 || bv.shape[0] != cout)
            throw DimensionError("conv2d: bias " + bv.shape_string() + " does not match weight " +
                                 wv.shape_string());
        const int hw = h * w;
        const int ck = cin * 9;
        auto col = std::make_shared<Tensor<T>>(Tensor<T>::zeros({ck, hw}));
        im2col(xv.data.data(), cin, h, w, col->data.data());
        Tensor<T> out = Tensor<T>::zeros({cout, h, w});
        gemm_nn(wv.data.data(), col->data.data(), out.data.data(), cout, ck, hw);
        for (int c = 0; c < cout; ++c) {
            T* orow = out.data.data() + static_cast<std::size_t>(c) * hw;
            for (int j = 0; j < hw; ++j) orow[j] += bv.data[c];
        }
        return push(std::move(out), wants(x) || wants(weight) || wants(bias),
                    [x = x.id, wt = weight.id, bi = bias.id, cin, h, w, cout, col](Tape& t,
                                                                                   int o) {
                        const int hw = h * w;
                        const int ck = cin * 9;
                        const auto& g = t.grads_[o];
                        if (t.wants_id(bi)) {
                            T* db = t.grad_ptr(bi);
                            for (int c = 0; c < cout; ++c) {
                                double s = 0.0;
                                const T* grow = g.data.data() + static_cast<std::size_t>(c) * hw;
                                for (int j = 0; j < hw; ++j) s += static_cast<double>(grow[j]);
                                db[c] += static_cast<T>(s);
                            }
                        }
                        if (t.wants_id(wt))
                            gemm_nt(g.data.data(), col->data.data(), t.grad_ptr(wt), cout, hw, ck);
                        if (t.wants_id(x)) {
                            Tensor<T> dcol = Tensor<T>::zeros({ck, hw});
                            gemm_tn(t.slots_[wt].value.data.data(), g.data.data(),
                                    dcol.data.data(), cout, ck, hw);
                            col2im_accum(dcol.data.data(), cin, h, w, t.grad_ptr(x));
                        }
                    });
    }

    // ---- data movement -----------------------------------------------------

    // out.data[i] = src.data[(*map)[i]]. Backward scatter-adds, so the map may
    // repeat indices (broadcasts) or cover a subset (slices).
    Var gather(Var src, std::shared_ptr<const std::vector<std::int64_t>> map,
               std::vector<int> out_shape) {
        const auto& sv = value(src);
        const std::int64_t out_n = Tensor<T>::numel_of(out_shape);
        if (static_cast<std::int64_t>(map->size()) != out_n)
            throw DimensionError("gather: map size " + std::to_string(map->size()) +
                                 " does not match output numel " + std::to_string(out_n));
        const std::int64_t src_n = sv.numel();
        Tensor<T> out = Tensor<T>::zeros(std::move(out_shape));
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const std::int64_t s = (*map)[i];
            if (s < 0 || s >= src_n)
                throw DimensionError("gather: map index " + std::to_string(s) +
                                     " out of bounds for source " + sv.shape_string());
            out.data[i] = sv.data[static_cast<std::size_t>(s)];
        }
        return push(std::move(out), wants(src), [s = src.id, map](Tape& t, int o) {
            if (!t.wants_id(s)) return;
            const auto& g = t.grads_[o];
            T* ds = t.grad_ptr(s);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                ds[static_cast<std::size_t>((*map)[i])] += g.data[i];
        });
    }

    Var slice_cols(Var a, int c0, int c1) {
        const auto& av = value(a);
        check_2d(av, "slice_cols");
        const int m = av.shape[0], n = av.shape[1];
        if (c0 < 0 || c1 > n || c0 >= c1)
            throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," +
                                 std::to_string(c1) + ") invalid for " + av.shape_string());
        const int nw = c1 - c0;
        Tensor<T> out = Tensor<T>::zeros({m, nw});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nw; ++j)
                out.data[static_cast<std::size_t>(i) * nw + j] =
                    av.data[static_cast<std::size_t>(i) * n + c0 + j];
        return push(std::move(out), wants(a), [a = a.id, c0, n, nw, m](Tape& t, int o) {
            if (!t.wants_id(a)) return;
            const auto& g = t.grads_[o];
            T* da = t.grad_ptr(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nw; ++j)
                    da[static_cast<std::size_t>(i) * n + c0 + j] +=
                        g.data[static_cast<std::size_t>(i) * nw + j];
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw ValidationError("concat_cols: no inputs");
        const int m = value(parts[0]).shape[0];
        int total = 0;
        bool req = false;
        for (Var p : parts) {
            const auto& pv = value(p);
            check_2d(pv, "concat_cols");
            if (pv.shape[0] != m)
                throw DimensionError("concat_cols: row counts disagree: " + pv.shape_string());
            total += pv.shape[1];
            req = req || wants(p);
        }
        Tensor<T> out = Tensor<T>::zeros({m, total});
        int off = 0;
        std::vector<std::pair<std::int32_t, int>> layout; // (var id, width)
        for (Var p : parts) {
            const auto& pv = value(p);
            const int n = pv.shape[1];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    out.data[static_cast<std::size_t>(i) * total + off + j] =
                        pv.data[static_cast<std::size_t>(i) * n + j];
            layout.emplace_back(p.id, n);
            off += n;
        }
        return push(std::move(out), req, [layout, m, total](Tape& t, int o) {
            const auto& g = t.grads_[o];
            int off2 = 0;
            for (const auto& [id, n] : layout) {
                if (t.wants_id(id)) {
                    T* dp = t.grad_ptr(id);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            dp[static_cast<std::size_t>(i) * n + j] +=
                                g.data[static_cast<std::size_t>(i) * total + off2 + j];
                }
                off2 += n;
            }
        });
    }

    // Concatenation along the first axis; for row-major data this is a flat
    // append (used to stack the mask plane under an image).
    Var concat_first(const std::vector<Var>& parts) {
        if (parts.empty()) throw ValidationError("concat_first: no inputs");
        std::vector<int> shape = value(parts[0]).shape;
        bool req = false;
        int dim0 = 0;
        for (Var p : parts) {
            const auto& pv = value(p);
            if (pv.shape.size() != shape.size())
                throw DimensionError("concat_first: rank mismatch " + pv.shape_string());
            for (std::size_t d = 1; d < shape.size(); ++d)
                if (pv.shape[d] != shape[d])
                    throw DimensionError("concat_first: trailing dims disagree: " +
                                         pv.shape_string());
            dim0 += pv.shape[0];
            req = req || wants(p);
        }
        shape[0] = dim0;
        Tensor<T> out = Tensor<T>::zeros(shape);
        std::size_t off = 0;
        std::vector<std::pair<std::int32_t, std::size_t>> layout; // (var id, numel)
        for (Var p : parts) {
            const auto& pv = value(p);
            std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off);
            layout.emplace_back(p.id, pv.data.size());
            off += pv.data.size();
        }
        return push(std::move(out), req, [layout](Tape& t, int o) {
            const auto& g = t.grads_[o];
            std::size_t off2 = 0;
            for (const auto& [id, n] : layout) {
                if (t.wants_id(id)) {
                    T* dp = t.grad_ptr(id);
                    for (std::size_t i = 0; i < n; ++i) dp[i] += g.data[off2 + i];
                }
                off2 += n;
            }
        });
    }

    // ---- reductions --------------------------------------------------------

    Var sum(Var a) {
        const auto& av = value(a);
        double s = 0.0;
        for (T v : av.data) s += static_cast<double>(v);
        return push(Tensor<T>::scalar(static_cast<T>(s)), wants(a), [a = a.id](Tape& t, int o) {
            if (!t.wants_id(a)) return;
            const T g = t.grads_[o].data[0];
            T* da = t.grad_ptr(a);
            const std::size_t n = t.slots_[a].value.data.size();
            for (std::size_t i = 0; i < n; ++i) da[i] += g;
        });
    }

    // Mean squared error split by a {0,1} mask of pred's shape:
    //   mean over mask==1 entries + lambda_known * mean over mask==0 entries.
    // Either term is 0 when its region is empty. target/mask are data, not
    // differentiated.
    Var masked_mse(Var pred, Tensor<T> target, Tensor<T> mask, T lambda_known) {
        const auto& pv = value(pred);
        require_same_shape(pv, target, "masked_mse");
        require_same_shape(pv, mask, "masked_mse");
        double sm = 0.0, sk = 0.0;
        std::int64_t nm = 0, nk = 0;
        for (std::size_t i = 0; i < pv.data.size(); ++i) {
            const double d = static_cast<double>(pv.data[i]) - static_cast<double>(target.data[i]);
            if (mask.data[i] != T(0)) {
                sm += d * d;
                ++nm;
            } else {
                sk += d * d;
                ++nk;
            }
        }
        const double loss = (nm > 0 ? sm / static_cast<double>(nm) : 0.0) +
                            static_cast<double>(lambda_known) *
                                (nk > 0 ? sk / static_cast<double>(nk) : 0.0);
        auto tgt = std::make_shared<Tensor<T>>(std::move(target));
        auto msk = std::make_shared<Tensor<T>>(std::move(mask));
        return push(Tensor<T>::scalar(static_cast<T>(loss)), wants(pred),
                    [p = pred.id, tgt, msk, nm, nk, lambda_known](Tape& t, int o) {
                        if (!t.wants_id(p)) return;
                        const double g0 = static_cast<double>(t.grads_[o].data[0]);
                        const double cm = nm > 0 ? 2.0 * g0 / static_cast<double>(nm) : 0.0;
                        const double ck =
                            nk > 0 ? 2.0 * g0 * static_cast<double>(lambda_known) /
                                         static_cast<double>(nk)
                                   : 0.0;
                        const auto& pv2 = t.slots_[p].value;
                        T* dp = t.grad_ptr(p);
                        for (std::size_t i = 0; i < pv2.data.size(); ++i) {
                            const double d = static_cast<double>(pv2.data[i]) -
                                             static_cast<double>(tgt->data[i]);
                            dp[i] += static_cast<T>(d * (msk->data[i] != T(0) ? cm : ck));
                        }
                    });
    }

private:
    static constexpr T kGeluC0 = T(0.7978845608028654); // sqrt(2/pi)
    static constexpr T kGeluC1 = T(0.044715);

    struct Slot {
        Tensor<T> value;
        bool requires_grad = false;
        std::function<void(Tape&, int)> backward;
    };

    std::vector<Slot> slots_;
    std::vector<Tensor<T>> grads_;
    bool recording_;

    std::size_t check(Var v) const {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= slots_.size())
            throw ValidationError("tape: invalid variable id");
        return static_cast<std::size_t>(v.id);
    }

    static void check_2d(const Tensor<T>& t, const char* op) {
        if (t.shape.size() != 2)
            throw DimensionError(std::string(op) + ": expected 2-d tensor, got " +
                                 t.shape_string());
    }

    bool wants(Var v) const { return recording_ && slots_[check(v)].requires_grad; }
    bool wants_id(std::int32_t id) const { return slots_[id].requires_grad; }

    T* grad_ptr(std::int32_t id) {
        if (grads_[id].numel() == 0) grads_[id] = Tensor<T>::zeros(slots_[id].value.shape);
        return grads_[id].data.data();
    }

    Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&, int)> back) {
        Slot s;
        s.value = std::move(value);
        s.requires_grad = recording_ && requires_grad;
        if (s.requires_grad) s.backward = std::move(back);
        slots_.push_back(std::move(s));
        return Var{static_cast<std::int32_t>(slots_.size() - 1)};
    }

    static void im2col(const T* x, int cin, int h, int w, T* col) {
        const int hw = h * w;
        for (int c = 0; c < cin; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    T* dst = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) *
                                       static_cast<std::size_t>(hw);
                    const T* src = x + static_cast<std::size_t>(c) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        T* drow = dst + static_cast<std::size_t>(y) * w;
                        if (sy < 0 || sy >= h) {
                            for (int xx = 0; xx < w; ++xx) drow[xx] = T(0);
                            continue;
                        }
                        const T* srow = src + static_cast<std::size_t>(sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            drow[xx] = (sx >= 0 && sx < w) ? srow[sx] : T(0);
                        }
                    }
                }
            }
        }
    }

    static void col2im_accum(const T* col, int cin, int h, int w, T* dx) {
        const int hw = h * w;
        for (int c = 0; c < cin; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T* src = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) *
                                             static_cast<std::size_t>(hw);
                    T* dst = dx + static_cast<std::size_t>(c) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        const T* srow = src + static_cast<std::size_t>(y) * w;
                        T* drow = dst + static_cast<std::size_t>(sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            if (sx >= 0 && sx < w) drow[sx] += srow[xx];
                        }
                    }
                }
            }
        }
    }
};

} // namespace vitfill
