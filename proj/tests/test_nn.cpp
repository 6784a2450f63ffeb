#include "persona/errors.hpp"
#include "persona/nn.hpp"
#include "persona/rng.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace persona;
using namespace persona::nn;

namespace {

Tensor tensor_of(int rows, int cols, std::initializer_list<double> data) {
    Tensor t(rows, cols);
    t.data = data;
    return t;
}

Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
    Tensor t(rows, cols);
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// Naive reference attention: explicit per-head loops, no shared code with the
// tape implementation.
Tensor reference_mha(const Tensor& x, const MhaParams& p, int n_heads) {
    const int f = x.rows();
    const int d = x.cols();
    const int dh = d / n_heads;
    auto project = [&](const Parameter& w, const Parameter& b) {
        Tensor out(f, d);
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < d; ++j) {
                double s = b.value.at(0, j);
                for (int k = 0; k < d; ++k) s += x.at(i, k) * w.value.at(k, j);
                out.at(i, j) = s;
            }
        return out;
    };
    Tensor q = project(p.w_q, p.b_q);
    Tensor k = project(p.w_k, p.b_k);
    Tensor v = project(p.w_v, p.b_v);

    Tensor merged(f, d);
    const double scale = 1.0 / std::sqrt(double(dh));
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < f; ++i) {
            std::vector<double> w_row(f);
            double mx = -1e300;
            for (int j = 0; j < f; ++j) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += q.at(i, off + c) * k.at(j, off + c);
                w_row[j] = dot * scale;
                mx = std::max(mx, w_row[j]);
            }
            double denom = 0.0;
            for (int j = 0; j < f; ++j) {
                w_row[j] = std::exp(w_row[j] - mx);
                denom += w_row[j];
            }
            for (int j = 0; j < f; ++j) w_row[j] /= denom;
            for (int c = 0; c < dh; ++c) {
                double s = 0.0;
                for (int j = 0; j < f; ++j) s += w_row[j] * v.at(j, off + c);
                merged.at(i, off + c) = s;
            }
        }
    }

    Tensor out(f, d);
    for (int i = 0; i < f; ++i)
        for (int j = 0; j < d; ++j) {
            double s = p.b_o.value.at(0, j);
            for (int c = 0; c < d; ++c) s += merged.at(i, c) * p.w_o.value.at(c, j);
            out.at(i, j) = s;
        }
    return out;
}

MhaParams random_mha(int d, Rng& rng) {
    MhaParams p;
    p.w_q = Parameter("w_q", glorot_uniform(d, d, rng));
    p.w_k = Parameter("w_k", glorot_uniform(d, d, rng));
    p.w_v = Parameter("w_v", glorot_uniform(d, d, rng));
    p.w_o = Parameter("w_o", glorot_uniform(d, d, rng));
    p.b_q = Parameter("b_q", random_tensor(1, d, rng, 0.1));
    p.b_k = Parameter("b_k", random_tensor(1, d, rng, 0.1));
    p.b_v = Parameter("b_v", random_tensor(1, d, rng, 0.1));
    p.b_o = Parameter("b_o", random_tensor(1, d, rng, 0.1));
    return p;
}

} // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("elementary op values") {
    Tape tape;

    SUBCASE("softmax of zeros is uniform") {
        Var x = tape.leaf(tensor_of(1, 2, {0.0, 0.0}));
        Var y = tape.softmax_rows(x);
        CHECK(tape.value(y).at(0, 0) == doctest::Approx(0.5));
        CHECK(tape.value(y).at(0, 1) == doctest::Approx(0.5));
    }
    SUBCASE("layer_norm of a constant row is zero") {
        Var x = tape.leaf(tensor_of(1, 4, {3.0, 3.0, 3.0, 3.0}));
        Var gain = tape.leaf(Tensor(1, 4, 1.0));
        Var bias = tape.leaf(Tensor(1, 4));
        Var y = tape.layer_norm_rows(x, gain, bias);
        for (double v : tape.value(y).data) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("matmul identity") {
        Var eye = tape.leaf(tensor_of(2, 2, {1, 0, 0, 1}));
        Var a = tape.leaf(tensor_of(2, 2, {1, 2, 3, 4}));
        Var y = tape.matmul(eye, a);
        CHECK(tape.value(y).data == tape.value(a).data);
    }
    SUBCASE("cross entropy of uniform logits is ln 2") {
        Var logits = tape.leaf(tensor_of(1, 2, {0.0, 0.0}));
        Var loss = tape.cross_entropy(logits, 0);
        CHECK(tape.value(loss).at(0, 0) == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("cosine identities") {
        Var x = tape.leaf(tensor_of(1, 3, {1, 2, 3}));
        Var nx = tape.affine(x, -1.0, 0.0);
        CHECK(tape.value(tape.cosine_similarity(x, x)).at(0, 0) == doctest::Approx(1.0));
        CHECK(tape.value(tape.cosine_similarity(x, nx)).at(0, 0) == doctest::Approx(-1.0));
    }
    SUBCASE("cosine against a zero vector is 0 with a flag") {
        Var x = tape.leaf(tensor_of(1, 2, {1, 1}));
        Var z = tape.leaf(Tensor(1, 2));
        CHECK(tape.value(tape.cosine_similarity(x, z)).at(0, 0) == 0.0);
        CHECK(tape.saw_zero_cosine());
    }
    SUBCASE("shape mismatch names both shapes") {
        Var a = tape.leaf(Tensor(2, 3));
        Var b = tape.leaf(Tensor(2, 3));
        CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("(2,3)"), ConfigError);
    }
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Rng rng(5);
    Tape tape;
    Var x = tape.leaf(random_tensor(7, 9, rng, 30.0));
    Var y = tape.softmax_rows(x);
    const auto& t = tape.value(y);
    for (int i = 0; i < t.rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < t.cols(); ++j) {
            CHECK(t.at(i, j) > 0.0);
            sum += t.at(i, j);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("layer_norm output has zero mean and unit variance pre-affine") {
    Rng rng(6);
    Tape tape;
    const int d = 16;
    Var x = tape.leaf(random_tensor(5, d, rng, 3.0));
    Var gain = tape.leaf(Tensor(1, d, 1.0));
    Var bias = tape.leaf(Tensor(1, d));
    const auto& t = tape.value(tape.layer_norm_rows(x, gain, bias));
    for (int i = 0; i < t.rows(); ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < d; ++j) mean += t.at(i, j);
        mean /= d;
        for (int j = 0; j < d; ++j) var += (t.at(i, j) - mean) * (t.at(i, j) - mean);
        var /= d;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("simple analytic gradient: d(w^2)/dw = 2w") {
    Parameter w("w", tensor_of(1, 1, {3.0}));
    Tape tape;
    Var wv = tape.param(w);
    Var loss = tape.mul(wv, wv);
    tape.backward(loss);
    CHECK(w.grad.at(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("gradient check across every op") {
    Rng rng(42);
    // A contrived graph that routes through every differentiable op once.
    Parameter a("a", random_tensor(3, 4, rng));
    Parameter b("b", random_tensor(4, 4, rng));
    Parameter v("v", random_tensor(1, 4, rng));
    Parameter gain("gain", random_tensor(1, 4, rng, 0.5));
    Parameter bias("bias", random_tensor(1, 4, rng, 0.5));
    Parameter w("w", random_tensor(1, 3, rng));
    Parameter table("table", random_tensor(5, 4, rng));
    std::vector<Parameter*> params{&a, &b, &v, &gain, &bias, &w, &table};

    auto forward = [&](bool with_grad) {
        Tape tape;
        Var av = with_grad ? tape.param(a) : tape.frozen(a);
        Var bv = with_grad ? tape.param(b) : tape.frozen(b);
        Var vv = with_grad ? tape.param(v) : tape.frozen(v);
        Var gv = with_grad ? tape.param(gain) : tape.frozen(gain);
        Var biasv = with_grad ? tape.param(bias) : tape.frozen(bias);
        Var wv = with_grad ? tape.param(w) : tape.frozen(w);
        Var tv = with_grad ? tape.param(table) : tape.frozen(table);

        Var m = tape.matmul(av, bv);                    // 3x4
        m = tape.add_rowvec(m, vv);
        m = tape.layer_norm_rows(m, gv, biasv);
        Var nt = tape.matmul_nt(m, av);                 // 3x3
        Var sm = tape.softmax_rows(nt);
        Var mixed = tape.matmul(sm, m);                 // 3x4
        Var act = tape.relu(tape.affine(mixed, 1.3, 0.05));
        Var sig = tape.sigmoid(act);
        Var both = tape.mul(act, sig);
        Var tok = tape.outer_add(wv, vv, both);         // w:1x3, v:1x4, e:3x4
        Var sl = tape.slice_cols(tok, 1, 4);            // 3x3
        Var cc = tape.concat_cols(sl, tok);             // 3x7
        Var pooled = tape.mean_rows(cc);                // 1x7
        Var emb = tape.embedding_mean(tv, {0, 2, 2, 4});// 1x4
        Var embsl = tape.slice_cols(emb, 0, 3);
        Var diff = tape.sub(pooled, tape.concat_cols(embsl, emb)); // 1x7
        Var scaled = tape.mul_scalar(diff, tape.slice_cols(pooled, 2, 3));
        Var cos = tape.cosine_similarity(pooled, scaled);
        Var ce = tape.cross_entropy(tape.slice_cols(pooled, 0, 4), 2);
        Var loss = tape.add(tape.affine(cos, 0.7, 0.1), ce);
        if (with_grad) tape.backward(loss);
        return tape.value(loss).at(0, 0);
    };

    for (auto* p : params) p->zero_grad();
    forward(true);
    auto failures = gradcheck::check(params, [&] { return forward(false); });
    for (const auto& f : failures)
        MESSAGE("grad mismatch at ", f.param, "[", f.index, "]: analytic=", f.analytic,
                " numeric=", f.numeric, " rel=", f.rel);
    CHECK(failures.empty());
}

TEST_CASE("multi_head_attention") {
    Rng rng(9);

    SUBCASE("single token attends to itself with weight 1") {
        const int d = 8;
        MhaParams p = random_mha(d, rng);
        Tape tape;
        Var x = tape.leaf(random_tensor(1, d, rng));
        auto vars = MhaVars::bind(tape, p);
        std::vector<Var> attn;
        multi_head_attention(tape, x, vars, 2, &attn);
        REQUIRE(attn.size() == 2);
        for (Var a : attn) CHECK(tape.value(a).at(0, 0) == doctest::Approx(1.0));
    }

    SUBCASE("two identical tokens split attention evenly") {
        const int d = 8;
        MhaParams p = random_mha(d, rng);
        Tape tape;
        Tensor x(2, d);
        for (int j = 0; j < d; ++j) x.at(0, j) = x.at(1, j) = rng.uniform(-1.0, 1.0);
        Var xv = tape.leaf(std::move(x));
        auto vars = MhaVars::bind(tape, p);
        std::vector<Var> attn;
        multi_head_attention(tape, xv, vars, 2, &attn);
        for (Var a : attn)
            for (double w : tape.value(a).data) CHECK(w == doctest::Approx(0.5));
    }

    SUBCASE("matches the naive per-head reference") {
        const int d = 8;
        for (int trial = 0; trial < 5; ++trial) {
            MhaParams p = random_mha(d, rng);
            Tensor x = random_tensor(3, d, rng);
            Tape tape;
            Var xv = tape.leaf(x);
            auto vars = MhaVars::bind(tape, p);
            Var y = multi_head_attention(tape, xv, vars, 2);
            Tensor want = reference_mha(x, p, 2);
            for (std::size_t i = 0; i < want.size(); ++i)
                CHECK(std::abs(tape.value(y).data[i] - want.data[i]) < 1e-10);
        }
    }

    SUBCASE("indivisible head count is a configuration error") {
        const int d = 8;
        MhaParams p = random_mha(d, rng);
        Tape tape;
        Var x = tape.leaf(random_tensor(2, d, rng));
        auto vars = MhaVars::bind(tape, p);
        CHECK_THROWS_AS(multi_head_attention(tape, x, vars, 3), ConfigError);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradients leave parameters unchanged") {
        Parameter w("w", tensor_of(1, 3, {1.0, -2.0, 0.5}));
        std::vector<Parameter*> params{&w};
        Adam adam({0.01});
        adam.step(params);
        CHECK(w.value.data == std::vector<double>{1.0, -2.0, 0.5});
    }
    SUBCASE("descends a quadratic") {
        Parameter w("w", tensor_of(1, 1, {3.0}));
        std::vector<Parameter*> params{&w};
        Adam adam({0.05});
        for (int i = 0; i < 400; ++i) {
            w.zero_grad();
            Tape tape;
            Var wv = tape.param(w);
            tape.backward(tape.mul(wv, wv));
            adam.step(params);
        }
        CHECK(std::abs(w.value.at(0, 0)) < 1e-2);
    }
    SUBCASE("training step determinism") {
        auto run = [] {
            Rng rng(4);
            Parameter w("w", random_tensor(4, 4, rng));
            Parameter b("b", random_tensor(1, 4, rng));
            std::vector<Parameter*> params{&w, &b};
            Adam adam({1e-3});
            for (int step = 0; step < 25; ++step) {
                w.zero_grad();
                b.zero_grad();
                Tape tape;
                Var x = tape.leaf(random_tensor(2, 4, rng));
                Var y = tape.add_rowvec(tape.matmul(x, tape.param(w)), tape.param(b));
                Var loss = tape.cross_entropy(tape.slice_cols(tape.mean_rows(y), 0, 4), 1);
                tape.backward(loss);
                adam.step(params);
            }
            return std::make_pair(w.value.data, b.value.data);
        };
        auto [w1, b1] = run();
        auto [w2, b2] = run();
        CHECK(w1 == w2); // bit-identical
        CHECK(b1 == b2);
    }
}

TEST_CASE("backward misuse") {
    Tape tape;
    Var x = tape.leaf(tensor_of(1, 2, {1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(Var{}), ConfigError);
    CHECK_THROWS_AS(tape.backward(x), ConfigError); // non-scalar
    Var s = tape.cross_entropy(x, 0);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), ConfigError); // double backward
}

TEST_SUITE_END();
