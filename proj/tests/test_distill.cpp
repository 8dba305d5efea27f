#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dora/distill.hpp"
#include "dora/rng.hpp"

using namespace dora;

namespace {

HeadConfig tiny_head() {
  HeadConfig h;
  h.dim = 8;
  h.out_dim = 6;
  return h;
}

Tensor<double> random_prob(int64_t d, Rng& rng) {
  Tensor<double> p({1, d});
  double s = 0;
  for (auto& v : p.data) {
    v = rng.uniform() + 1e-3;
    s += v;
  }
  for (auto& v : p.data) v /= s;
  return p;
}

}  // namespace

TEST_CASE("head_forward normalizes and sharpens") {
  HeadConfig cfg = tiny_head();
  SUBCASE("zero parameters give the uniform distribution") {
    ProjectionHeadParams<double> p = init_head<double>(cfg, Rng(1));
    visit_params(p, [](const std::string&, Tensor<double>& t) { t.fill(0.0); });
    Tensor<double> cls({1, 8}, 0.3);
    auto prob = head_forward(p, cls, Role::student, cfg);
    for (double v : prob.data) CHECK(v == doctest::Approx(1.0 / 6.0));
    auto tprob = head_forward(p, cls, Role::teacher, cfg);
    for (double v : tprob.data) CHECK(v == doctest::Approx(1.0 / 6.0));
  }
  SUBCASE("outputs sum to 1 on random inputs") {
    ProjectionHeadParams<double> p = init_head<double>(cfg, Rng(2));
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor<double> cls({1, 8});
      for (auto& v : cls.data) v = rng.normal();
      auto sp = head_forward(p, cls, Role::student, cfg);
      auto tp = head_forward(p, cls, Role::teacher, cfg);
      double ss = 0, ts = 0;
      for (double v : sp.data) ss += v;
      for (double v : tp.data) ts += v;
      CHECK(ss == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(ts == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("teacher temperature 0.04 sharpens relative to 1.0") {
    ProjectionHeadParams<double> p = init_head<double>(cfg, Rng(4));
    Rng rng(5);
    Tensor<double> cls({1, 8});
    for (auto& v : cls.data) v = rng.normal();
    // float64 softmax comparison on the same logits
    Tensor<double> logits = head_logits(p, cls);
    auto peak = [](const Tensor<double>& prob) {
      double m = 0;
      for (double v : prob.data) m = std::max(m, v);
      return m;
    };
    double sharp = peak(softmax_rows(scale(logits, 1.0 / 0.04)));
    double soft = peak(softmax_rows(logits));
    CHECK(sharp > soft);

    HeadConfig sharp_cfg = cfg;
    sharp_cfg.tau_teacher = 0.04;
    ProjectionHeadParams<double> pc = p; // zero center
    auto tp = head_forward(pc, cls, Role::teacher, sharp_cfg);
    CHECK(peak(tp) == doctest::Approx(sharp).epsilon(1e-12));
  }
  SUBCASE("center shifts only the teacher output") {
    ProjectionHeadParams<double> p = init_head<double>(cfg, Rng(6));
    Rng rng(7);
    Tensor<double> cls({1, 8});
    for (auto& v : cls.data) v = rng.normal();
    auto before = head_forward(p, cls, Role::teacher, cfg);
    auto sbefore = head_forward(p, cls, Role::student, cfg);
    for (auto& v : p.center.data) v = rng.normal();
    auto after = head_forward(p, cls, Role::teacher, cfg);
    auto safter = head_forward(p, cls, Role::student, cfg);
    CHECK(max_abs_diff(before, after) > 0.0);
    CHECK(max_abs_diff(sbefore, safter) == 0.0);
  }
}

TEST_CASE("ema_update arithmetic") {
  Tensor<double> t({2, 2}, 1.0), s({2, 2}, 0.0);
  SUBCASE("alpha 1 leaves the teacher") {
    ema_update_tensor(t, s, 1.0);
    for (double v : t.data) CHECK(v == 1.0);
  }
  SUBCASE("alpha 0 copies the student") {
    ema_update_tensor(t, s, 0.0);
    for (double v : t.data) CHECK(v == 0.0);
  }
  SUBCASE("alpha 0.9 on 1.0 vs 0.0 gives 0.9") {
    ema_update_tensor(t, s, 0.9);
    for (double v : t.data) CHECK(v == doctest::Approx(0.9));
  }
  SUBCASE("shape mismatch throws") {
    Tensor<double> bad({3, 2});
    CHECK_THROWS_AS(ema_update_tensor(t, bad, 0.5), std::invalid_argument);
  }
}

TEST_CASE("center_update recurrence") {
  Tensor<double> center({1, 3}, 1.0);
  Tensor<double> mean({1, 3}, 4.0);
  SUBCASE("momentum 1 keeps the center") {
    center_update(center, mean, 1.0);
    for (double v : center.data) CHECK(v == 1.0);
  }
  SUBCASE("momentum 0 copies the batch mean") {
    center_update(center, mean, 0.0);
    for (double v : center.data) CHECK(v == 4.0);
  }
  SUBCASE("two steps at momentum 0.9 match the closed form") {
    Tensor<double> mean2({1, 3}, -2.0);
    center_update(center, mean, 0.9);
    center_update(center, mean2, 0.9);
    // closed form: 0.9^2 * c0 + 0.1 * (0.9 * m1 + m2)
    double expect = 0.81 * 1.0 + 0.1 * (0.9 * 4.0 + -2.0);
    for (double v : center.data) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("cross_entropy values and bounds") {
  SUBCASE("uniform teacher and student over D=4 gives ln 4") {
    Tensor<double> u({1, 4}, 0.25);
    CHECK(cross_entropy(u, u) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  }
  SUBCASE("one-hot teacher gives -ln p") {
    Tensor<double> t({1, 4});
    t(0, 2) = 1.0;
    Tensor<double> s({1, 4});
    s(0, 0) = 0.1;
    s(0, 1) = 0.2;
    s(0, 2) = 0.3;
    s(0, 3) = 0.4;
    CHECK(cross_entropy(t, s) == doctest::Approx(-std::log(0.3 + 1e-12)).epsilon(1e-9));
  }
  SUBCASE("random pairs match the float64 summation oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      auto t = random_prob(5, rng);
      auto s = random_prob(5, rng);
      double expect = 0;
      for (int64_t i = 0; i < 5; ++i) expect -= t[i] * std::log(s[i] + 1e-12);
      CHECK(cross_entropy(t, s) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("cross entropy dominates entropy, equality iff equal") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      auto t = random_prob(6, rng);
      auto s = random_prob(6, rng);
      double entropy = cross_entropy(t, t);
      CHECK(cross_entropy(t, s) >= entropy - 1e-9);
      if (max_abs_diff(t, s) > 1e-3) CHECK(cross_entropy(t, s) > entropy + 1e-6);
    }
  }
  SUBCASE("invalid probability vectors are rejected") {
    Tensor<double> bad({1, 3}, 0.5);
    Tensor<double> ok({1, 3}, 1.0 / 3.0);
    CHECK_THROWS_AS(cross_entropy(bad, ok), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(ok, bad), std::invalid_argument);
  }
}

TEST_CASE("multi_object_loss term structure") {
  Tensor<double> u({1, 4}, 0.25);
  SUBCASE("k=3 sums six terms") {
    std::vector<Tensor<double>> teacher = {u, u};
    std::vector<std::vector<Tensor<double>>> student = {{u, u, u}, {u, u, u}};
    auto loss = multi_object_loss(teacher, student);
    CHECK(loss.terms == 6);
    CHECK(loss.value == doctest::Approx(6.0 * std::log(4.0)).epsilon(1e-9));
  }
  SUBCASE("uniform distributions with k=1 give 2 ln 4") {
    std::vector<Tensor<double>> teacher = {u, u};
    std::vector<std::vector<Tensor<double>>> student = {{u}, {u}};
    auto loss = multi_object_loss(teacher, student);
    CHECK(loss.terms == 2);
    CHECK(loss.value == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-9));
  }
  SUBCASE("equal outputs factorize to 2k times one term") {
    Rng rng(10);
    auto t = random_prob(4, rng);
    auto s = random_prob(4, rng);
    const int k = 4;
    std::vector<Tensor<double>> teacher = {t, t};
    std::vector<std::vector<Tensor<double>>> student(2, std::vector<Tensor<double>>(k, s));
    auto loss = multi_object_loss(teacher, student);
    CHECK(loss.terms == 2 * k);
    CHECK(loss.value ==
          doctest::Approx(2.0 * k * cross_entropy(t, s)).epsilon(1e-12));
  }
  SUBCASE("permutation of object index leaves the loss unchanged") {
    Rng rng(11);
    std::vector<Tensor<double>> teacher = {random_prob(4, rng), random_prob(4, rng)};
    std::vector<Tensor<double>> objs = {random_prob(4, rng), random_prob(4, rng),
                                        random_prob(4, rng)};
    std::vector<std::vector<Tensor<double>>> student = {objs, objs};
    double base = multi_object_loss(teacher, student).value;
    std::vector<Tensor<double>> shuffled = {objs[2], objs[0], objs[1]};
    std::vector<std::vector<Tensor<double>>> student2 = {shuffled, shuffled};
    CHECK(multi_object_loss(teacher, student2).value ==
          doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("missing outputs are an error") {
    std::vector<Tensor<double>> teacher = {u, u};
    std::vector<std::vector<Tensor<double>>> student = {{u}, {}};
    CHECK_THROWS_AS(multi_object_loss(teacher, student), std::invalid_argument);
  }
}

TEST_CASE("local_loss term structure") {
  Tensor<double> u({1, 4}, 0.25);
  SUBCASE("m=6 local crops give 12 terms") {
    std::vector<Tensor<double>> teacher = {u, u};
    std::vector<Tensor<double>> locals(6, u);
    auto loss = local_loss(teacher, locals);
    CHECK(loss.terms == 12);
    CHECK(loss.value == doctest::Approx(12.0 * std::log(4.0)).epsilon(1e-9));
  }
  SUBCASE("uniform with m=1 gives 2 ln 4") {
    std::vector<Tensor<double>> teacher = {u, u};
    auto loss = local_loss(teacher, {u});
    CHECK(loss.terms == 2);
    CHECK(loss.value == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-9));
  }
  SUBCASE("crop permutation invariance") {
    Rng rng(12);
    std::vector<Tensor<double>> teacher = {random_prob(4, rng), random_prob(4, rng)};
    std::vector<Tensor<double>> locals = {random_prob(4, rng), random_prob(4, rng),
                                          random_prob(4, rng)};
    double base = local_loss(teacher, locals).value;
    std::rotate(locals.begin(), locals.begin() + 1, locals.end());
    CHECK(local_loss(teacher, locals).value == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("total_loss averages per-frame components") {
  SUBCASE("single frame is the plain sum") {
    CHECK(total_loss<double>({1.5}, {2.25}) == doctest::Approx(3.75));
  }
  SUBCASE("constant per-frame losses are T-independent") {
    std::vector<double> obj(7, 0.8), local(7, 1.9);
    CHECK(total_loss<double>(obj, local) == doctest::Approx(2.7).epsilon(1e-12));
  }
  SUBCASE("random values match the naive mean oracle") {
    Rng rng(13);
    std::vector<double> obj, local;
    for (int t = 0; t < 9; ++t) {
      obj.push_back(rng.uniform());
      local.push_back(rng.uniform());
    }
    double expect = 0;
    for (int t = 0; t < 9; ++t) expect += obj[t] + local[t];
    expect /= 9.0;
    CHECK(total_loss<double>(obj, local) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("empty clip is an error") {
    CHECK_THROWS_AS(total_loss<double>({}, {}), std::invalid_argument);
  }
}

TEST_CASE("graph head path equals the inference head") {
  HeadConfig cfg = tiny_head();
  auto p = init_head<double>(cfg, Rng(14));
  Rng rng(15);
  Tensor<double> cls({1, 8});
  for (auto& v : cls.data) v = rng.normal();

  Graph<double> g;
  auto vars = lift_head(g, p, false);
  auto prob = student_prob_on_graph(g, vars, g.constant(cls), cfg.tau_student);
  auto direct = head_forward(p, cls, Role::student, cfg);
  CHECK(max_abs_diff(g.value(prob), direct) < 1e-14);
}
