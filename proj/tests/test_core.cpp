#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>

#include "core/archive.h"
#include "core/blob.h"
#include "core/error.h"
#include "core/fft.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "core/wav.h"
#include "util.h"

using namespace ms;

TEST_CASE("rng: deterministic per seed") {
    Rng a(42), b(42), c(43);
    bool all_eq = true, any_diff = false;
    for (int i = 0; i < 64; i++) {
        uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
        all_eq &= (x == y);
        any_diff |= (x != z);
    }
    CHECK(all_eq);
    CHECK(any_diff);
    CHECK(a.seed() == 42);
}

TEST_CASE("rng: stream derivation is position-independent") {
    Rng a(7);
    Rng b(7);
    // burn draws on b; the derived stream must not care
    for (int i = 0; i < 17; i++) (void)b.next_u64();
    Rng sa = a.stream("x");
    Rng sb = b.stream("x");
    for (int i = 0; i < 32; i++) CHECK(sa.next_u64() == sb.next_u64());

    // distinct names / indices give distinct streams
    Rng s1 = a.stream("x");
    Rng s2 = a.stream("y");
    Rng i0 = a.stream("x", 0);
    Rng i1 = a.stream("x", 1);
    CHECK(s1.next_u64() != s2.next_u64());
    CHECK(i0.next_u64() != i1.next_u64());
    Rng i1b = a.stream("x", 1);
    (void)i1b;
    Rng i1c = b.stream("x", 1);
    Rng i1d = a.stream("x", 1);
    for (int i = 0; i < 8; i++) CHECK(i1c.next_u64() == i1d.next_u64());
}

TEST_CASE("rng: uniform ranges") {
    Rng r(123);
    double mn = 1e9, mx = -1e9, sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; i++) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
    CHECK(mn < 0.01);
    CHECK(mx > 0.99);

    for (int i = 0; i < 1000; i++) {
        double u = r.uniform(-2.5, 3.5);
        CHECK(u >= -2.5);
        CHECK(u < 3.5);
    }
}

TEST_CASE("rng: randint unbiased bounds and coverage") {
    Rng r(5);
    int counts[7] = {0};
    const int n = 70000;
    for (int i = 0; i < n; i++) {
        int64_t k = r.randint(7);
        REQUIRE(k >= 0);
        REQUIRE(k < 7);
        counts[k]++;
    }
    for (int k = 0; k < 7; k++)
        CHECK((double)counts[k] / n == doctest::Approx(1.0 / 7).epsilon(0.05));
    for (int i = 0; i < 16; i++) CHECK(r.randint(1) == 0);
}

TEST_CASE("rng: normal moments") {
    Rng r(9001);
    const int n = 200000;
    double s = 0, s2 = 0, s3 = 0;
    for (int i = 0; i < n; i++) {
        double x = r.normal();
        s += x;
        s2 += x * x;
        s3 += x * x * x;
    }
    double mean = s / n, var = s2 / n - mean * mean, skew = s3 / n;
    CHECK(std::abs(mean) < 0.012);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::abs(skew) < 0.05);
}

TEST_CASE("rng: fill_normal matches moments and is deterministic") {
    Rng r1(77), r2(77);
    std::vector<float> a(50000), b(50000);
    r1.fill_normal(a.data(), (int64_t)a.size());
    r2.fill_normal(b.data(), (int64_t)b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
    double s = 0, s2 = 0;
    for (float x : a) { s += x; s2 += (double)x * x; }
    double mean = s / a.size(), var = s2 / a.size() - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));

    std::vector<double> d(1000);
    Rng r3(77);
    r3.fill_normal(d.data(), (int64_t)d.size());
    bool finite = true;
    for (double x : d) finite &= std::isfinite(x);
    CHECK(finite);
}

// 8-point DFT of [0.5, -1.25, 2.0, 0.125, -0.75, 1.5, -0.375, 0.25],
// reference values computed with an independent O(n^2) DFT in extended precision
TEST_CASE("fft: 8-point known answer") {
    const double in[8] = {0.5, -1.25, 2.0, 0.125, -0.75, 1.5, -0.375, 0.25};
    const double want[8][2] = {
        {2.0, 0.0},
        {-0.60615530061468736, -0.34206800408867588},
        {-1.875, 0.125},
        {3.1061553006146871, 4.4079319959113246},
        {0.75, 0.0},
        {3.1061553006146871, -4.4079319959113246},
        {-1.875, -0.125},
        {-0.60615530061468736, 0.34206800408867588},
    };
    std::complex<double> a[8];
    for (int i = 0; i < 8; i++) a[i] = in[i];
    fft(a, 8, false);
    for (int k = 0; k < 8; k++) {
        CHECK(std::abs(a[k].real() - want[k][0]) < 1e-12);
        CHECK(std::abs(a[k].imag() - want[k][1]) < 1e-12);
    }

    std::complex<float> af[8];
    for (int i = 0; i < 8; i++) af[i] = (float)in[i];
    fft(af, 8, false);
    for (int k = 0; k < 8; k++) {
        CHECK(std::abs(af[k].real() - want[k][0]) < 1e-5);
        CHECK(std::abs(af[k].imag() - want[k][1]) < 1e-5);
    }
}

TEST_CASE("fft: inverse roundtrip and Parseval") {
    const int n = 1024;
    Rng r(321);
    std::vector<std::complex<double>> x(n), y;
    for (auto& c : x) c = {r.normal(), r.normal()};
    y = x;
    fft(y.data(), n, false);

    double ex = 0, eX = 0;
    for (int i = 0; i < n; i++) {
        ex += std::norm(x[i]);
        eX += std::norm(y[i]);
    }
    CHECK(ex == doctest::Approx(eX / n).epsilon(1e-12));

    fft(y.data(), n, true);
    double maxerr = 0;
    for (int i = 0; i < n; i++) maxerr = std::max(maxerr, std::abs(y[i] - x[i]));
    CHECK(maxerr < 1e-12);
}

TEST_CASE("fft: rejects non power of two") {
    std::complex<double> a[6] = {};
    CHECK_THROWS_AS(fft(a, 6, false), Error);
    try {
        fft(a, 6, false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::validation);
    }
    CHECK(is_pow2(1));
    CHECK(is_pow2(2));
    CHECK(is_pow2(1024));
    CHECK(!is_pow2(0));
    CHECK(!is_pow2(3));
    CHECK(!is_pow2(-4));
    CHECK(!is_pow2(6));
}

TEST_CASE("tensor: shapes, accessors, finiteness") {
    TenF t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.ndim() == 3);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(-1) == 4);
    CHECK(t.dim(-2) == 3);
    t.at(1, 2, 3) = 5.0f;
    CHECK(t.v[23] == 5.0f);
    t.at(0, 1) = 0;  // (i,j) treats shape[1] as the row width
    TenF u({2, 3, 4}, 1.0f);
    CHECK(u.v[0] == 1.0f);
    CHECK(t.same_shape(u));
    CHECK(!t.same_shape(TenF({2, 3})));
    CHECK(t.all_finite());
    t.at(0) = std::nanf("");
    CHECK(!t.all_finite());

    TenF z = zeros_like(u);
    CHECK(z.same_shape(u));
    CHECK(z.v[5] == 0.0f);

    CHECK_THROWS_AS(TenF({2, -1}), Error);
}

TEST_CASE("archive: roundtrip and errors") {
    tu::TmpDir td("arch");
    Archive a;
    a.config = "{\"kind\":\"test\",\"n\":3}";
    TenF w({3, 5});
    Rng r(1);
    for (auto& x : w.v) x = (float)r.normal();
    a.put("enc.w", w);
    a.put("enc.b", TenF({5}, 0.25f));

    std::string p = td / "m.ckpt";
    archive_save(p, a);
    Archive b = archive_load(p);
    CHECK(b.config == a.config);
    REQUIRE(b.tensors.size() == 2);
    const TenF* fw = b.find("enc.w");
    REQUIRE(fw != nullptr);
    CHECK(fw->shape == w.shape);
    CHECK(std::memcmp(fw->data(), w.data(), w.numel() * 4) == 0);
    CHECK(b.get("enc.b").v[2] == 0.25f);
    CHECK(b.find("nope") == nullptr);
    try {
        b.get("nope");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }

    try {
        archive_load(td / "missing.ckpt");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::io);
    }

    // corrupt the magic
    {
        std::string bytes = tu::read_file(p);
        bytes[0] = 'X';
        std::ofstream f(td / "bad.ckpt", std::ios::binary);
        f.write(bytes.data(), (std::streamsize)bytes.size());
    }
    try {
        archive_load(td / "bad.ckpt");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }
}

TEST_CASE("blob: latent and embedding roundtrips") {
    tu::TmpDir td("blob");
    LatentFile lf;
    lf.K = 4;
    lf.C = 3;
    lf.T = 8;
    lf.count = 2;
    lf.data.resize(2 * 4 * 3 * 8);
    Rng r(2);
    for (auto& x : lf.data) x = (float)r.normal();
    latents_save(td / "l.bin", lf);
    LatentFile g = latents_load(td / "l.bin");
    CHECK(g.K == 4);
    CHECK(g.C == 3);
    CHECK(g.T == 8);
    CHECK(g.count == 2);
    CHECK(std::memcmp(g.data.data(), lf.data.data(), lf.data.size() * 4) == 0);
    CHECK(g.item(1) - g.item(0) == 4 * 3 * 8);

    LatentFile bad = lf;
    bad.count = 3;  // size mismatch
    CHECK_THROWS_AS(latents_save(td / "bad.bin", bad), Error);

    EmbFile e;
    e.count = 5;
    e.d = 7;
    e.data.resize(35);
    for (auto& x : e.data) x = (float)r.uniform();
    emb_save(td / "e.bin", e);
    EmbFile h = emb_load(td / "e.bin");
    CHECK(h.count == 5);
    CHECK(h.d == 7);
    CHECK(std::memcmp(h.data.data(), e.data.data(), 35 * 4) == 0);

    try {
        latents_load(td / "nothere.bin");
        CHECK(false);
    } catch (const Error& e2) {
        CHECK(e2.kind == ErrKind::io);
    }
}

TEST_CASE("wav: float32 roundtrip is lossless") {
    tu::TmpDir td("wav");
    Rng r(3);
    std::vector<float> x(4321);
    for (auto& s : x) s = (float)(r.uniform() * 2 - 1);
    wav_write(td / "a.wav", x.data(), (int64_t)x.size(), 8000);
    Wav w = wav_read(td / "a.wav");
    CHECK(w.sample_rate == 8000);
    REQUIRE(w.samples.size() == x.size());
    CHECK(std::memcmp(w.samples.data(), x.data(), x.size() * 4) == 0);

    try {
        wav_read(td / "missing.wav");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::io);
    }
    // not a wav
    {
        std::ofstream f(td / "junk.wav", std::ios::binary);
        f << "this is not audio";
    }
    try {
        wav_read(td / "junk.wav");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }
}

TEST_CASE("error: kinds map onto exit codes") {
    CHECK((int)ErrKind::validation == 2);
    CHECK((int)ErrKind::io == 3);
    CHECK((int)ErrKind::data == 4);
    CHECK((int)ErrKind::numeric == 5);
    CHECK_THROWS_AS(fail_validation("x"), Error);
    CHECK_THROWS_AS(check(false, ErrKind::data, "y"), Error);
    CHECK_NOTHROW(check(true, ErrKind::data, "y"));
    try {
        fail_numeric("boom");
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::numeric);
        CHECK(std::string(e.what()) == "boom");
    }
}
