#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "autograd/ops.h"
#include "autograd/tape.h"
#include "core/rng.h"
#include "core/tensor.h"

using namespace ms;

namespace {

TenD randn(Rng& r, std::vector<int64_t> shape, double scale = 1.0) {
    TenD t(std::move(shape));
    for (auto& x : t.v) x = r.normal() * scale;
    return t;
}

using Build = std::function<Node<double>*(Tape<double>&, std::vector<Node<double>*>&)>;

// central finite differences in double against the tape's analytic gradient.
// the graph is rebuilt for every probe, so ops with cached intermediates get
// exercised the same way training does.
void gradcheck(const char* name, std::vector<TenD> inputs, const Build& build,
               double h = 1e-4, double rtol = 1e-3, double atol = 1e-7) {
    Tape<double> tp;
    std::vector<Node<double>*> leaves;
    for (auto& t : inputs) leaves.push_back(tp.leaf(t, true));
    Node<double>* root = build(tp, leaves);
    REQUIRE(root->val.numel() == 1);
    tp.backward(root);
    std::vector<TenD> analytic;
    for (auto* l : leaves) {
        l->ensure_grad();
        analytic.push_back(l->grad);
    }

    auto eval = [&]() {
        Tape<double> t2;
        std::vector<Node<double>*> ls;
        for (auto& t : inputs) ls.push_back(t2.leaf(t, false));
        return build(t2, ls)->val.v[0];
    };
    for (size_t pi = 0; pi < inputs.size(); pi++) {
        for (int64_t ei = 0; ei < inputs[pi].numel(); ei++) {
            double keep = inputs[pi].v[ei];
            inputs[pi].v[ei] = keep + h;
            double fp = eval();
            inputs[pi].v[ei] = keep - h;
            double fm = eval();
            inputs[pi].v[ei] = keep;
            double num = (fp - fm) / (2 * h);
            double ana = analytic[pi].v[ei];
            double err = std::abs(num - ana);
            double tol = atol + rtol * std::max(std::abs(num), std::abs(ana));
            INFO(name, ": input ", pi, " elem ", ei, " analytic=", ana, " numeric=", num);
            REQUIRE(err <= tol);
        }
    }
}

}  // namespace

TEST_CASE("tape: mechanics") {
    Tape<double> tp;
    TenD a({3}, 2.0);
    Node<double>* x = tp.leaf(a, true);
    Node<double>* y = tp.leaf(a, false);
    Node<double>* z = mul(tp, x, y);
    Node<double>* s = sum_all(tp, z);
    CHECK(s->val.v[0] == doctest::Approx(12.0));
    tp.backward(s);
    REQUIRE(x->grad_live);
    for (int i = 0; i < 3; i++) CHECK(x->grad.v[i] == doctest::Approx(2.0));
    CHECK(!y->grad_live);  // needs_grad=false leaves stay untouched

    // non-scalar root is rejected
    Tape<double> tp2;
    Node<double>* v = tp2.leaf(TenD({2}, 1.0), true);
    CHECK_THROWS_AS(tp2.backward(v), Error);

    // zero_grad clears without deallocating
    x->zero_grad();
    CHECK(x->grad_live);
    CHECK(x->grad.v[0] == 0.0);
}

TEST_CASE("gradcheck: elementwise arithmetic") {
    Rng r(101);
    gradcheck("add/sub/mul",
              {randn(r, {2, 3, 4}), randn(r, {2, 3, 4})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* p = mul(tp, add(tp, in[0], in[1]), sub(tp, in[0], in[1]));
                  return mean_all(tp, p);
              });
    gradcheck("scalar ops",
              {randn(r, {3, 5})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* y = mul_scalar(tp, add_scalar(tp, in[0], 0.7), -1.3);
                  return sum_all(tp, y);
              });
}

TEST_CASE("gradcheck: nonlinearities") {
    Rng r(102);
    gradcheck("silu", {randn(r, {4, 9})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, in[0]));
              });
    gradcheck("tanh", {randn(r, {4, 9})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, tanh_n(tp, in[0]));
              });
    gradcheck("exp", {randn(r, {4, 9}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, exp_n(tp, in[0]));
              });

    // keep log inputs well above the eps kink and abs inputs away from zero
    TenD pos({3, 7});
    TenD far({3, 7});
    for (int64_t i = 0; i < pos.numel(); i++) {
        double u = r.uniform(0.5, 2.0);
        pos.v[i] = u;
        far.v[i] = (r.uniform() < 0.5 ? -1 : 1) * r.uniform(0.3, 2.0);
    }
    gradcheck("log_eps", {pos},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, log_eps(tp, in[0], 1e-6));
              });
    gradcheck("abs", {far},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, abs_n(tp, in[0]));
              });

    // clamp: values placed clear of the boundaries so FD stays one-sided-free
    TenD cl({10});
    for (int i = 0; i < 10; i++) cl.v[i] = -2.0 + 0.41 * i;  // none within 1e-3 of +-1
    gradcheck("clamp", {cl},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return sum_all(tp, mul(tp, clamp_n(tp, in[0], -1.0, 1.0), in[0]));
              });
}

TEST_CASE("gradcheck: shape ops") {
    Rng r(103);
    gradcheck("reshape", {randn(r, {2, 3, 4})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, reshape(tp, in[0], {6, 4})));
              });
    gradcheck("concat+slice",
              {randn(r, {2, 2, 3}), randn(r, {2, 3, 3})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* c = concat_c(tp, in[0], in[1]);
                  return mean_all(tp, silu_n(tp, slice_c(tp, c, 1, 4)));
              });
    gradcheck("permutes+slice_last", {randn(r, {2, 3, 5})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* p = permute_bct_btc(tp, in[0]);       // [2,5,3]
                  auto* q = slice_last(tp, p, 1, 3);          // [2,5,2]
                  auto* b = permute_btc_bct(tp, q);           // [2,2,5]
                  return mean_all(tp, silu_n(tp, b));
              });
    gradcheck("split/merge heads", {randn(r, {2, 3, 8})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* s = split_heads(tp, in[0], 2);  // [4,3,4]
                  return mean_all(tp, merge_heads(tp, silu_n(tp, s), 2));
              });
    gradcheck("upsample_nearest", {randn(r, {2, 3, 4})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, upsample_nearest(tp, in[0], 3)));
              });
}

TEST_CASE("gradcheck: linear and matmuls") {
    Rng r(104);
    gradcheck("linear+bias",
              {randn(r, {3, 4}), randn(r, {5, 4}, 0.5), randn(r, {5}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, linear(tp, in[0], in[1], in[2])));
              });
    gradcheck("linear no bias",
              {randn(r, {3, 4}), randn(r, {5, 4}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, linear(tp, in[0], in[1], (Node<double>*)nullptr)));
              });
    gradcheck("bmm",
              {randn(r, {2, 3, 4}), randn(r, {2, 4, 5})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, bmm(tp, in[0], in[1])));
              });
    gradcheck("bmm_nt",
              {randn(r, {2, 3, 4}), randn(r, {2, 5, 4})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, bmm_nt(tp, in[0], in[1])));
              });
    Rng r2(105);
    auto fb = std::make_shared<TenD>(randn(r2, {4, 3}));
    gradcheck("matmul_const_left", {randn(r, {2, 3, 5})},
              [fb](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, matmul_const_left(tp, fb, in[0])));
              });
}

TEST_CASE("gradcheck: softmax") {
    Rng r(106);
    gradcheck("softmax_last",
              {randn(r, {2, 3, 5}), randn(r, {2, 3, 5})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return sum_all(tp, mul(tp, softmax_last(tp, in[0]), in[1]));
              });
}

TEST_CASE("gradcheck: conv1d variants") {
    Rng r(107);
    struct Cfg { int Ci, Co, k, stride, pad, T; bool bias; };
    const Cfg cfgs[] = {
        {3, 4, 3, 1, 1, 8, true},    // same-pad stride-1 (im2col memcpy path)
        {3, 4, 1, 1, 0, 8, true},    // pointwise: direct matmul path, no im2col
        {2, 5, 4, 2, 1, 9, true},    // strided downsample
        {2, 3, 7, 1, 3, 10, false},  // wide kernel, no bias
        {4, 2, 5, 4, 2, 12, true},   // stride 4 (encoder-style 2s/s/s/2 shape)
    };
    for (const auto& c : cfgs) {
        CAPTURE(c.k);
        CAPTURE(c.stride);
        std::vector<TenD> in = {randn(r, {2, c.Ci, c.T}), randn(r, {c.Co, c.Ci, c.k}, 0.5)};
        if (c.bias) in.push_back(randn(r, {c.Co}, 0.5));
        bool bias = c.bias;
        int stride = c.stride, pad = c.pad;
        gradcheck("conv1d", in,
                  [bias, stride, pad](Tape<double>& tp, std::vector<Node<double>*>& in2) {
                      auto* y = conv1d(tp, in2[0], in2[1], bias ? in2[2] : (Node<double>*)nullptr, stride, pad);
                      return mean_all(tp, silu_n(tp, y));
                  });
    }
}

TEST_CASE("conv1d: shape validation") {
    Tape<double> tp;
    auto* x = tp.leaf(TenD({1, 3, 8}), false);
    auto* w = tp.leaf(TenD({4, 2, 3}), false);  // Ci mismatch
    CHECK_THROWS_AS(conv1d(tp, x, w, (Node<double>*)nullptr, 1, 1), Error);
    auto* w2 = tp.leaf(TenD({4, 3, 11}), false);  // empty output
    CHECK_THROWS_AS(conv1d(tp, x, w2, (Node<double>*)nullptr, 1, 0), Error);
}

TEST_CASE("gradcheck: group_norm and scale_shift") {
    Rng r(108);
    gradcheck("group_norm",
              {randn(r, {2, 6, 5}), randn(r, {6}, 0.5), randn(r, {6}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* g = group_norm(tp, in[0], in[1], in[2], 3);
                  return mean_all(tp, silu_n(tp, g));
              },
              1e-4, 2e-3, 1e-7);
    gradcheck("group_norm groups=C",
              {randn(r, {1, 4, 6}), randn(r, {4}, 0.5), randn(r, {4}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  auto* g = group_norm(tp, in[0], in[1], in[2], 4);
                  return mean_all(tp, silu_n(tp, g));
              },
              1e-4, 2e-3, 1e-7);
    gradcheck("scale_shift",
              {randn(r, {2, 3, 4}), randn(r, {2, 3}, 0.5), randn(r, {2, 3}, 0.5)},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, silu_n(tp, scale_shift(tp, in[0], in[1], in[2])));
              });
}

TEST_CASE("group_norm: normalizes to zero mean unit var per group") {
    Rng r(109);
    Tape<double> tp;
    auto* x = tp.leaf(randn(r, {2, 6, 16}, 3.0), false);
    auto* gamma = tp.leaf(TenD({6}, 1.0), false);
    auto* beta = tp.leaf(TenD({6}, 0.0), false);
    auto* y = group_norm(tp, x, gamma, beta, 3);
    for (int b = 0; b < 2; b++)
        for (int g = 0; g < 3; g++) {
            double s = 0, s2 = 0;
            const int N = 2 * 16;
            for (int c = 0; c < 2; c++)
                for (int t = 0; t < 16; t++) {
                    double v = y->val.at(b, g * 2 + c, t);
                    s += v;
                    s2 += v * v;
                }
            CHECK(std::abs(s / N) < 1e-9);
            CHECK(s2 / N == doctest::Approx(1.0).epsilon(1e-3));  // eps=1e-5 shifts var slightly
        }
}

TEST_CASE("gradcheck: stft magnitude") {
    Rng r(110);
    gradcheck("stft_mag", {randn(r, {1, 64})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, stft_mag(tp, in[0], 16, 8));
              },
              1e-5, 2e-3, 1e-6);
    // hop > window gap and multiple batch rows
    gradcheck("stft_mag b2", {randn(r, {2, 40})},
              [](Tape<double>& tp, std::vector<Node<double>*>& in) {
                  return mean_all(tp, stft_mag(tp, in[0], 16, 12));
              },
              1e-5, 2e-3, 1e-6);
}

TEST_CASE("float tape: silu kernel path matches double") {
    Rng r(111);
    TenD xd = randn(r, {3, 33});
    Ten<float> xf({3, 33});
    for (int64_t i = 0; i < xd.numel(); i++) xf.v[i] = (float)xd.v[i];

    Tape<float> tf;
    auto* nf = tf.leaf(xf, true);
    auto* yf = mean_all(tf, silu_n(tf, nf));
    tf.backward(yf);

    Tape<double> td;
    auto* nd = td.leaf(xd, true);
    auto* yd = mean_all(td, silu_n(td, nd));
    td.backward(yd);

    CHECK(std::abs(yf->val.v[0] - yd->val.v[0]) < 1e-6);
    for (int64_t i = 0; i < xd.numel(); i++)
        CHECK(std::abs((double)nf->grad.v[i] - nd->grad.v[i]) < 1e-5);
}

TEST_CASE("float tape: conv1d forward matches double within float precision") {
    Rng r(112);
    TenD xd = randn(r, {2, 3, 16});
    TenD wd = randn(r, {4, 3, 3}, 0.5);
    TenD bd = randn(r, {4}, 0.5);
    Ten<float> xf({2, 3, 16}), wf({4, 3, 3}), bf({4});
    for (int64_t i = 0; i < xd.numel(); i++) xf.v[i] = (float)xd.v[i];
    for (int64_t i = 0; i < wd.numel(); i++) wf.v[i] = (float)wd.v[i];
    for (int64_t i = 0; i < bd.numel(); i++) bf.v[i] = (float)bd.v[i];

    Tape<float> tf;
    auto* yf = conv1d(tf, tf.leaf(xf, false), tf.leaf(wf, false), tf.leaf(bf, false), 1, 1);
    Tape<double> td;
    auto* yd = conv1d(td, td.leaf(xd, false), td.leaf(wd, false), td.leaf(bd, false), 1, 1);
    REQUIRE(yf->val.numel() == yd->val.numel());
    for (int64_t i = 0; i < yf->val.numel(); i++)
        CHECK(std::abs((double)yf->val.v[i] - yd->val.v[i]) < 1e-5);
}
