#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/rng.h"
#include "nn/modules.h"
#include "util.h"

using namespace ms;

TEST_CASE("param store: counts, shapes, zero_grad") {
    ParamStore<double> ps;
    Rng r(1);
    LinearM<double> lin(ps, r, "lin", 64, 64);
    CHECK(ps.count() == 4160);  // 64*64 weights + 64 bias
    auto sh = ps.shapes();
    REQUIRE(sh.size() == 2);
    CHECK(sh[0].first == "lin.w");
    CHECK(sh[0].second == std::vector<int64_t>{64, 64});
    CHECK(sh[1].second == std::vector<int64_t>{64});

    lin.w->node.ensure_grad();
    lin.w->node.grad.v[7] = 3.0;
    ps.zero_grad();
    CHECK(lin.w->node.grad.v[7] == 0.0);

    std::string table = param_table(sh);
    CHECK(table.find("lin.w") != std::string::npos);
    CHECK(table.find("total 4160") != std::string::npos);
}

TEST_CASE("module init: bounds and zero_init") {
    ParamStore<double> ps;
    Rng r(2);
    Conv1dM<double> c(ps, r, "c", 4, 8, 3, 2, 1);
    double bound = 1.0 / std::sqrt(4.0 * 3.0);
    CHECK(c.w->node.val.shape == std::vector<int64_t>{8, 4, 3});
    CHECK(c.b->node.val.shape == std::vector<int64_t>{8});
    CHECK(c.stride == 2);
    CHECK(c.pad == 1);
    double mx = 0;
    for (double x : c.w->node.val.v) mx = std::max(mx, std::abs(x));
    CHECK(mx <= bound);
    CHECK(mx > bound * 0.5);  // not degenerate

    Conv1dM<double> z(ps, r, "z", 4, 8, 3, 1, 1, /*zero_init=*/true);
    for (double x : z.w->node.val.v) CHECK(x == 0.0);
    for (double x : z.b->node.val.v) CHECK(x == 0.0);

    GroupNormM<double> gn(ps, "gn", 6, 3);
    for (double x : gn.gamma->node.val.v) CHECK(x == 1.0);
    for (double x : gn.beta->node.val.v) CHECK(x == 0.0);
}

TEST_CASE("gn_groups: 8 past small channel counts") {
    CHECK(gn_groups(1) == 1);
    CHECK(gn_groups(4) == 4);
    CHECK(gn_groups(7) == 7);
    CHECK(gn_groups(8) == 8);
    CHECK(gn_groups(16) == 8);
    CHECK(gn_groups(240) == 8);
}

TEST_CASE("modules forward: shapes through the tape") {
    ParamStore<double> ps;
    Rng r(3);
    Conv1dM<double> c(ps, r, "c", 3, 5, 4, 2, 1);
    LinearM<double> l(ps, r, "l", 6, 9);
    GroupNormM<double> g(ps, "g", 5, 5);

    Tape<double> tp;
    auto* x = tp.leaf(TenD({2, 3, 10}, 0.5), false);
    auto* y = c.fwd(tp, x);
    CHECK(y->val.shape == std::vector<int64_t>{2, 5, 5});  // (10+2-4)/2+1
    auto* n = g.fwd(tp, y);
    CHECK(n->val.shape == y->val.shape);
    auto* f = tp.leaf(TenD({4, 6}, 1.0), false);
    CHECK(l.fwd(tp, f)->val.shape == std::vector<int64_t>{4, 9});
}

// two-step trace with lr=0.1, betas (0.9, 0.999), eps 1e-8, grads 0.5 then -0.25;
// expected values worked out by hand from the bias-corrected update rule
TEST_CASE("adam: matches the hand-computed trace") {
    ParamStore<double> ps;
    Param<double>* p = ps.add("p", TenD({1}, 1.0));
    Adam<double> opt(0.1, 0.9, 0.999);

    p->node.ensure_grad();
    p->node.grad.v[0] = 0.5;
    double n1 = opt.step(ps, 0.1);
    CHECK(n1 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p->node.val.v[0] == doctest::Approx(0.90000000199999997).epsilon(1e-14));

    ps.zero_grad();
    p->node.grad.v[0] = -0.25;
    double n2 = opt.step(ps, 0.1);
    CHECK(n2 == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p->node.val.v[0] == doctest::Approx(0.87336629870784632).epsilon(1e-14));
    CHECK(opt.t == 2);
}

TEST_CASE("adam: global norm clip pre-scales gradients") {
    // grads (3,4) have norm 5; clip=1 must behave exactly like grads scaled by 1/5
    auto run = [](double clip, double g0, double g1) {
        ParamStore<double> ps;
        Param<double>* a = ps.add("a", TenD({1}, 1.0));
        Param<double>* b = ps.add("b", TenD({1}, -2.0));
        a->node.ensure_grad();
        b->node.ensure_grad();
        a->node.grad.v[0] = g0;
        b->node.grad.v[0] = g1;
        Adam<double> opt(0.01, 0.9, 0.999);
        double norm = opt.step(ps, 0.01, clip);
        return std::tuple{norm, a->node.val.v[0], b->node.val.v[0]};
    };
    auto [n1, a1, b1] = run(1.0, 3.0, 4.0);
    auto [n2, a2, b2] = run(0.0, 0.6, 0.8);
    CHECK(n1 == doctest::Approx(5.0).epsilon(1e-15));  // returns the pre-clip norm
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a1 == doctest::Approx(a2).epsilon(1e-14));
    CHECK(b1 == doctest::Approx(b2).epsilon(1e-14));

    // clip above the norm changes nothing
    auto [n3, a3, b3] = run(10.0, 3.0, 4.0);
    auto [n4, a4, b4] = run(0.0, 3.0, 4.0);
    CHECK(n3 == n4);
    CHECK(a3 == a4);
    CHECK(b3 == b4);
}

TEST_CASE("adam: params without live grads are skipped") {
    ParamStore<double> ps;
    Param<double>* a = ps.add("a", TenD({2}, 1.0));
    Param<double>* b = ps.add("b", TenD({2}, 1.0));
    a->node.ensure_grad();
    a->node.grad.v[0] = 1.0;
    Adam<double> opt(0.1, 0.9, 0.999);
    opt.step(ps, 0.1);
    CHECK(a->node.val.v[0] != 1.0);
    CHECK(b->node.val.v[0] == 1.0);
    CHECK(b->node.val.v[1] == 1.0);
}

TEST_CASE("cosine_lr: endpoints and midpoint") {
    CHECK(cosine_lr(2.0, 0, 100) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(cosine_lr(2.0, 100, 100) == doctest::Approx(0.1).epsilon(1e-12));  // 5% floor
    CHECK(cosine_lr(2.0, 50, 100) == doctest::Approx(2.0 * (0.05 + 0.95 * 0.5)).epsilon(1e-12));
    CHECK(cosine_lr(2.0, 0, 1) == 2.0);   // degenerate totals
    CHECK(cosine_lr(2.0, 0, 0) == 2.0);
    CHECK(cosine_lr(1.0, 30, 100, 0.25) == doctest::Approx(0.25 + 0.75 * 0.5 * (1 + std::cos(M_PI * 0.3))).epsilon(1e-12));
    // monotone decreasing
    double prev = 1e9;
    for (int s = 0; s <= 100; s += 5) {
        double v = cosine_lr(1.0, s, 100);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("param store: archive roundtrip") {
    tu::TmpDir td("psarch");
    ParamStore<double> ps;
    Rng r(4);
    LinearM<double> l(ps, r, "lin", 3, 5);
    Conv1dM<double> c(ps, r, "conv", 2, 4, 3);

    Archive a;
    a.config = "{}";
    ps.to_archive(a);
    archive_save(td / "w.ckpt", a);
    Archive b = archive_load(td / "w.ckpt");

    ParamStore<double> ps2;
    Rng r2(999);  // different init, must be overwritten
    LinearM<double> l2(ps2, r2, "lin", 3, 5);
    Conv1dM<double> c2(ps2, r2, "conv", 2, 4, 3);
    ps2.from_archive(b);
    for (int64_t i = 0; i < l.w->node.val.numel(); i++)
        CHECK(l2.w->node.val.v[i] == doctest::Approx(l.w->node.val.v[i]).epsilon(1e-7));

    // missing param and shape mismatch are data errors
    ParamStore<double> ps3;
    Rng r3(5);
    LinearM<double> l3(ps3, r3, "other", 3, 5);
    try {
        ps3.from_archive(b);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }
    ParamStore<double> ps4;
    Rng r4(6);
    LinearM<double> l4(ps4, r4, "lin", 5, 3);  // transposed shape
    try {
        ps4.from_archive(b);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }
}
