#include "persona/nn.hpp"

#include "persona/errors.hpp"
#include "persona/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace persona::nn {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor glorot_uniform(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& v : t.data) v = rng.uniform(-a, a);
    return t;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ConfigError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                      b.shape_str());
}

// C += A(^T?) * B(^T?)
void mm_acc(Tensor& c, const Tensor& a, bool ta, const Tensor& b, bool tb) {
    const int n = ta ? a.cols() : a.rows();
    const int k = ta ? a.rows() : a.cols();
    const int m = tb ? b.rows() : b.cols();
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = ta ? a.at(p, i) : a.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < m; ++j) c.at(i, j) += av * (tb ? b.at(j, p) : b.at(p, j));
        }
    }
}

Tensor mm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
    const int n = ta ? a.cols() : a.rows();
    const int m = tb ? b.rows() : b.cols();
    Tensor c(n, m);
    mm_acc(c, a, ta, b, tb);
    return c;
}

} // namespace

Tensor& Tape::grad_of(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::push(Tensor value, std::function<void(Tape&, Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::param(Parameter& p) {
    Var v = push(p.value, nullptr);
    node(v).bound = &p;
    return v;
}

Var Tape::frozen(const Parameter& p) { return leaf(p.value); }

const Tensor& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols() != tb.rows()) shape_error("matmul", ta, tb);
    return push(mm(ta, false, tb, false), [a, b](Tape& t, Node& self) {
        mm_acc(t.grad_of(a), self.grad, false, t.value(b), true);
        mm_acc(t.grad_of(b), t.value(a), true, self.grad, false);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols() != tb.cols()) shape_error("matmul_nt", ta, tb);
    return push(mm(ta, false, tb, true), [a, b](Tape& t, Node& self) {
        mm_acc(t.grad_of(a), self.grad, false, t.value(b), false);
        mm_acc(t.grad_of(b), self.grad, true, t.value(a), false);
    });
}

Var Tape::dense(Var x, Var weight, Var bias) { return add_rowvec(matmul(x, weight), bias); }

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("add", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), [a, b](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i];
            gb.data[i] += self.grad.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("sub", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
    return push(std::move(out), [a, b](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i];
            gb.data[i] -= self.grad.data[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("mul", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), [a, b](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i] * vb.data[i];
            gb.data[i] += self.grad.data[i] * va.data[i];
        }
    });
}

Var Tape::add_rowvec(Var m, Var v) {
    const Tensor& tm = value(m);
    const Tensor& tv = value(v);
    if (tv.rows() != 1 || tv.cols() != tm.cols()) shape_error("add_rowvec", tm, tv);
    Tensor out = tm;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += tv.at(0, j);
    return push(std::move(out), [m, v](Tape& t, Node& self) {
        Tensor& gm = t.grad_of(m);
        Tensor& gv = t.grad_of(v);
        for (int i = 0; i < self.grad.rows(); ++i)
            for (int j = 0; j < self.grad.cols(); ++j) {
                gm.at(i, j) += self.grad.at(i, j);
                gv.at(0, j) += self.grad.at(i, j);
            }
    });
}

Var Tape::mul_scalar(Var a, Var s) {
    const Tensor& ta = value(a);
    const Tensor& ts = value(s);
    if (ts.size() != 1) shape_error("mul_scalar", ta, ts);
    Tensor out = ta;
    const double sv = ts.data[0];
    for (auto& x : out.data) x *= sv;
    return push(std::move(out), [a, s](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gs = t.grad_of(s);
        const Tensor& va = t.value(a);
        const double sv = t.value(s).data[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i] * sv;
            gs.data[0] += self.grad.data[i] * va.data[i];
        }
    });
}

Var Tape::affine(Var a, double scale, double shift) {
    Tensor out = value(a);
    for (auto& x : out.data) x = scale * x + shift;
    return push(std::move(out), [a, scale](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga.data[i] += scale * self.grad.data[i];
    });
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    return push(std::move(out), [a](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        const Tensor& va = t.value(a);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (va.data[i] > 0.0) ga.data[i] += self.grad.data[i];
    });
}

Var Tape::sigmoid(Var a) {
    Tensor out = value(a);
    for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    return push(std::move(out), [a](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value.data[i];
            ga.data[i] += self.grad.data[i] * y * (1.0 - y);
        }
    });
}

Var Tape::softmax_rows(Var a) {
    Tensor out = value(a);
    for (int i = 0; i < out.rows(); ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < out.cols(); ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) /= sum;
    }
    return push(std::move(out), [a](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        for (int i = 0; i < self.value.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < self.value.cols(); ++j)
                dot += self.grad.at(i, j) * self.value.at(i, j);
            for (int j = 0; j < self.value.cols(); ++j)
                ga.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
        }
    });
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    const Tensor& ta = value(a);
    const Tensor& tg = value(gain);
    const Tensor& tb = value(bias);
    if (tg.rows() != 1 || tg.cols() != ta.cols()) shape_error("layer_norm gain", ta, tg);
    if (tb.rows() != 1 || tb.cols() != ta.cols()) shape_error("layer_norm bias", ta, tb);

    const int n = ta.rows();
    const int d = ta.cols();
    Tensor normed(n, d);
    Tensor inv_std(n, 1);
    Tensor out(n, d);
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += ta.at(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dv = ta.at(i, j) - mu;
            var += dv * dv;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = is;
        for (int j = 0; j < d; ++j) {
            normed.at(i, j) = (ta.at(i, j) - mu) * is;
            out.at(i, j) = normed.at(i, j) * tg.at(0, j) + tb.at(0, j);
        }
    }
    return push(std::move(out), [a, gain, bias, normed, inv_std](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gg = t.grad_of(gain);
        Tensor& gb = t.grad_of(bias);
        const Tensor& vg = t.value(gain);
        const int n = self.grad.rows();
        const int d = self.grad.cols();
        for (int i = 0; i < n; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int j = 0; j < d; ++j) {
                const double dy = self.grad.at(i, j);
                gg.at(0, j) += dy * normed.at(i, j);
                gb.at(0, j) += dy;
                const double dxhat = dy * vg.at(0, j);
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * normed.at(i, j);
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            const double is = inv_std.at(i, 0);
            for (int j = 0; j < d; ++j) {
                const double dxhat = self.grad.at(i, j) * vg.at(0, j);
                ga.at(i, j) += is * (dxhat - mean_dxhat - normed.at(i, j) * mean_dxhat_xhat);
            }
        }
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& ta = value(a);
    const int n = ta.rows();
    Tensor out(1, ta.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < ta.cols(); ++j) out.at(0, j) += ta.at(i, j);
    for (auto& x : out.data) x /= n;
    return push(std::move(out), [a, n](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < self.grad.cols(); ++j) ga.at(i, j) += self.grad.at(0, j) / n;
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rows() != tb.rows()) shape_error("concat_cols", ta, tb);
    Tensor out(ta.rows(), ta.cols() + tb.cols());
    for (int i = 0; i < ta.rows(); ++i) {
        for (int j = 0; j < ta.cols(); ++j) out.at(i, j) = ta.at(i, j);
        for (int j = 0; j < tb.cols(); ++j) out.at(i, ta.cols() + j) = tb.at(i, j);
    }
    const int split = ta.cols();
    return push(std::move(out), [a, b, split](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (int i = 0; i < self.grad.rows(); ++i) {
            for (int j = 0; j < split; ++j) ga.at(i, j) += self.grad.at(i, j);
            for (int j = split; j < self.grad.cols(); ++j) gb.at(i, j - split) += self.grad.at(i, j);
        }
    });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Tensor& ta = value(a);
    if (c0 < 0 || c1 > ta.cols() || c0 >= c1)
        throw ConfigError("slice_cols: bad range [" + std::to_string(c0) + "," +
                          std::to_string(c1) + ") for " + ta.shape_str());
    Tensor out(ta.rows(), c1 - c0);
    for (int i = 0; i < ta.rows(); ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = ta.at(i, j);
    return push(std::move(out), [a, c0](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        for (int i = 0; i < self.grad.rows(); ++i)
            for (int j = 0; j < self.grad.cols(); ++j) ga.at(i, c0 + j) += self.grad.at(i, j);
    });
}

Var Tape::outer_add(Var w, Var v, Var e) {
    const Tensor& tw = value(w);
    const Tensor& tv = value(v);
    const Tensor& te = value(e);
    if (tw.rows() != 1 || tv.rows() != 1) shape_error("outer_add", tw, tv);
    if (te.rows() != tw.cols() || te.cols() != tv.cols()) shape_error("outer_add", tw, te);
    Tensor out = te;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += tw.at(0, i) * tv.at(0, j);
    return push(std::move(out), [w, v, e](Tape& t, Node& self) {
        Tensor& gw = t.grad_of(w);
        Tensor& gv = t.grad_of(v);
        Tensor& ge = t.grad_of(e);
        const Tensor& vw = t.value(w);
        const Tensor& vv = t.value(v);
        for (int i = 0; i < self.grad.rows(); ++i)
            for (int j = 0; j < self.grad.cols(); ++j) {
                const double g = self.grad.at(i, j);
                ge.at(i, j) += g;
                gw.at(0, i) += g * vv.at(0, j);
                gv.at(0, j) += g * vw.at(0, i);
            }
    });
}

Var Tape::embedding_mean(Var table, std::vector<int> row_ids) {
    const Tensor& tt = value(table);
    if (row_ids.empty()) throw ConfigError("embedding_mean: empty id list");
    for (int id : row_ids)
        if (id < 0 || id >= tt.rows())
            throw ConfigError("embedding_mean: row id " + std::to_string(id) + " out of range");
    Tensor out(1, tt.cols());
    for (int id : row_ids)
        for (int j = 0; j < tt.cols(); ++j) out.at(0, j) += tt.at(id, j);
    const double inv = 1.0 / static_cast<double>(row_ids.size());
    for (auto& x : out.data) x *= inv;
    return push(std::move(out), [table, ids = std::move(row_ids), inv](Tape& t, Node& self) {
        Tensor& gt = t.grad_of(table);
        for (int id : ids)
            for (int j = 0; j < self.grad.cols(); ++j) gt.at(id, j) += self.grad.at(0, j) * inv;
    });
}

Var Tape::cross_entropy(Var logits, int label) {
    const Tensor& tl = value(logits);
    if (tl.rows() != 1) throw ConfigError("cross_entropy: logits must be 1xC, got " + tl.shape_str());
    if (label < 0 || label >= tl.cols())
        throw ConfigError("cross_entropy: label " + std::to_string(label) + " out of range");
    double mx = tl.at(0, 0);
    for (int j = 1; j < tl.cols(); ++j) mx = std::max(mx, tl.at(0, j));
    double sum = 0.0;
    for (int j = 0; j < tl.cols(); ++j) sum += std::exp(tl.at(0, j) - mx);
    const double loss = std::log(sum) - (tl.at(0, label) - mx);
    Tensor out(1, 1);
    out.at(0, 0) = loss;
    return push(std::move(out), [logits, label, mx, sum](Tape& t, Node& self) {
        Tensor& gl = t.grad_of(logits);
        const Tensor& vl = t.value(logits);
        const double g = self.grad.at(0, 0);
        for (int j = 0; j < vl.cols(); ++j) {
            const double p = std::exp(vl.at(0, j) - mx) / sum;
            gl.at(0, j) += g * (p - (j == label ? 1.0 : 0.0));
        }
    });
}

Var Tape::cosine_similarity(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb) || ta.rows() != 1) shape_error("cosine_similarity", ta, tb);
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        dot += ta.data[i] * tb.data[i];
        na2 += ta.data[i] * ta.data[i];
        nb2 += tb.data[i] * tb.data[i];
    }
    Tensor out(1, 1);
    if (na2 == 0.0 || nb2 == 0.0) {
        saw_zero_cosine_ = true;
        out.at(0, 0) = 0.0;
        return push(std::move(out), [](Tape&, Node&) {});
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    const double c = dot / (na * nb);
    out.at(0, 0) = c;
    return push(std::move(out), [a, b, na, nb, c](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        const double g = self.grad.at(0, 0);
        for (std::size_t i = 0; i < va.size(); ++i) {
            ga.data[i] += g * (vb.data[i] / (na * nb) - c * va.data[i] / (na * na));
            gb.data[i] += g * (va.data[i] / (na * nb) - c * vb.data[i] / (nb * nb));
        }
    });
}

void Tape::backward(Var loss) {
    if (backward_done_) throw ConfigError("backward called twice on one tape");
    if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size()))
        throw ConfigError("backward: invalid loss var");
    const Tensor& lv = nodes_[static_cast<std::size_t>(loss.id)].value;
    if (lv.size() != 1) throw ConfigError("backward: loss must be scalar, got " + lv.shape_str());
    backward_done_ = true;

    grad_of(loss).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0) continue; // never touched by any downstream gradient
        if (n.backprop) n.backprop(*this, n);
        if (n.bound) {
            for (std::size_t k = 0; k < n.grad.size(); ++k) n.bound->grad.data[k] += n.grad.data[k];
        }
    }
}

void Adam::step(std::vector<Parameter*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        auto [it, fresh] = state_.try_emplace(p->name);
        Moments& mo = it->second;
        if (fresh) {
            mo.m = Tensor(p->value.rows(), p->value.cols());
            mo.v = Tensor(p->value.rows(), p->value.cols());
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data[i];
            mo.m.data[i] = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * g;
            mo.v.data[i] = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = mo.m.data[i] / bc1;
            const double vhat = mo.v.data[i] / bc2;
            p->value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

MhaVars MhaVars::bind(Tape& tape, MhaParams& p) {
    return {tape.param(p.w_q), tape.param(p.w_k), tape.param(p.w_v), tape.param(p.w_o),
            tape.param(p.b_q), tape.param(p.b_k), tape.param(p.b_v), tape.param(p.b_o)};
}

MhaVars MhaVars::bind_frozen(Tape& tape, const MhaParams& p) {
    return {tape.frozen(p.w_q), tape.frozen(p.w_k), tape.frozen(p.w_v), tape.frozen(p.w_o),
            tape.frozen(p.b_q), tape.frozen(p.b_k), tape.frozen(p.b_v), tape.frozen(p.b_o)};
}

Var multi_head_attention(Tape& tape, Var x, const MhaVars& p, int n_heads,
                         std::vector<Var>* attention) {
    const int d_model = tape.value(x).cols();
    if (n_heads < 1 || d_model % n_heads != 0)
        throw ConfigError("multi_head_attention: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    const int dh = d_model / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Var q = tape.add_rowvec(tape.matmul(x, p.w_q), p.b_q);
    Var k = tape.add_rowvec(tape.matmul(x, p.w_k), p.b_k);
    Var v = tape.add_rowvec(tape.matmul(x, p.w_v), p.b_v);

    Var merged;
    for (int h = 0; h < n_heads; ++h) {
        Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = tape.affine(tape.matmul_nt(qh, kh), scale, 0.0);
        Var attn = tape.softmax_rows(scores);
        if (attention) attention->push_back(attn);
        Var oh = tape.matmul(attn, vh);
        merged = merged.valid() ? tape.concat_cols(merged, oh) : oh;
    }
    return tape.add_rowvec(tape.matmul(merged, p.w_o), p.b_o);
}

} // namespace persona::nn
