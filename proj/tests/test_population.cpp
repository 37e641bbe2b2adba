#include <doctest.h>

#include <cmath>

#include "mlrem/geometry.hpp"
#include "mlrem/model.hpp"
#include "mlrem/population.hpp"
#include "mlrem/rng.hpp"

using namespace mlrem;

namespace {

const QuadratureSpec kQuad{};  // defaults

GroundTruth gt2d(double pi1, double sigma) {
  Eigen::VectorXd th(2);
  th << 1.0, 0.0;
  return make_ground_truth(th, pi1, sigma);
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

// Monte Carlo of the raw population update E[tanh(y<x,theta>/sigma^2 + nu) y x]
// straight from the data-generating process; the independent oracle for the
// quadrature path.
struct McUpdate {
  Eigen::VectorXd m;
  double n = 0.0;
  double se = 0.0;  // rough scalar standard-error scale
};
McUpdate mc_update(const Eigen::VectorXd& theta, double nu, const GroundTruth& gt,
                   long long samples, std::uint64_t seed) {
  CounterRng rng = CounterRng::stream(seed, 0);
  const int d = gt.dim();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
  double nacc = 0.0;
  const double inv_s2 = 1.0 / (gt.sigma * gt.sigma);
  Eigen::VectorXd x(d);
  for (long long i = 0; i < samples; ++i) {
    for (int j = 0; j < d; ++j) x(j) = rng.next_gaussian();
    const int z = rng.next_label(gt.pi_star[0]);
    const double signal = x.dot(gt.theta_star);
    const double y = (z == 1 ? signal : -signal) + gt.sigma * rng.next_gaussian();
    const double w = std::tanh(std::clamp(y * x.dot(theta) * inv_s2 + nu, -700.0, 700.0));
    m += w * y * x;
    m2 += (w * y * x).cwiseAbs2();
    nacc += w;
  }
  McUpdate out;
  out.m = m / samples;
  out.n = nacc / samples;
  out.se = std::sqrt((m2 / samples - out.m.cwiseAbs2()).maxCoeff() / samples);
  return out;
}

}  // namespace

TEST_CASE("noiseless update at the reference configurations") {
  const GroundTruth gt = gt2d(0.8, 0.0);

  // theta = theta*: fixed point (varphi = pi/2 kills the cos term)
  const Eigen::VectorXd m_fix = m_noiseless(gt.theta_star, gt);
  CHECK((m_fix - gt.theta_star).norm() < 1e-14);

  // orthogonal: contraction to (2/pi) along the current direction
  const Eigen::VectorXd th_perp = vec2(0.0, 3.0);
  const Eigen::VectorXd m_perp = m_noiseless(th_perp, gt);
  CHECK(m_perp(0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(m_perp(1) == doctest::Approx(2.0 / M_PI).epsilon(1e-13));

  // 45 degrees: coordinates must match the cycloid point at phi = pi/2
  const Eigen::VectorXd th45 = vec2(M_SQRT1_2, M_SQRT1_2);
  const Eigen::VectorXd m45 = m_noiseless(th45, gt);
  const Eigen::Vector2d cyc = cycloid_point(M_PI / 2, 1.0);
  CHECK(m45(0) == doctest::Approx(cyc(0)).epsilon(1e-13));
  CHECK(m45(1) == doctest::Approx(cyc(1)).epsilon(1e-13));

  CHECK(m_noiseless(Eigen::VectorXd::Zero(2), gt).norm() == 0.0);
}

TEST_CASE("noiseless imbalance update") {
  const GroundTruth gt = gt2d(0.8, 0.0);
  CHECK(n_noiseless(gt.theta_star, gt) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(n_noiseless(vec2(0.0, 1.0), gt) == 0.0);

  const GroundTruth gt74 = gt2d(0.7, 0.0);  // tanh nu* = 0.4
  const double varphi = M_PI / 4;
  const Eigen::VectorXd th = vec2(-std::sin(varphi), std::cos(varphi));  // sgn(rho) = -1
  CHECK(n_noiseless(th, gt74) == doctest::Approx(-(2.0 / M_PI) * varphi * 0.4).epsilon(1e-13));
  CHECK(n_noiseless(th, gt74) == doctest::Approx(-0.2).epsilon(1e-13));
}

TEST_CASE("angle recurrence") {
  CHECK(recurrence_step(0.0) == 0.0);
  CHECK(recurrence_step(M_PI / 4) == doctest::Approx(std::atan(1.0 + M_PI / 2)).epsilon(1e-15));
  CHECK(recurrence_step(M_PI / 2) == M_PI / 2);
  for (double v = 0.01; v < M_PI / 2 - 0.01; v += 0.037) {
    const double next = recurrence_step(v);
    CHECK(std::tan(next) >= 2.0 * std::tan(v) - 1e-12);  // linear growth law
    CHECK(next < M_PI / 2);
  }
}

TEST_CASE("population run: convergence, cycloid exactness, accuracy identities") {
  const GroundTruth gt = gt2d(0.7, 0.0);

  // converged at t = 0 when starting at the truth
  const PopulationRun trivial =
      run_population_noiseless(gt.theta_star, gt, PopulationStop{50, 1e-12});
  CHECK(trivial.converged);
  CHECK(trivial.records.size() == 1);

  // varphi0 = 0.3 start
  const double varphi0 = 0.3;
  const Eigen::VectorXd th0 = vec2(std::sin(varphi0), std::cos(varphi0));
  const PopulationRun run = run_population_noiseless(th0, gt, PopulationStop{50, 1e-12});
  CHECK(run.converged);
  CHECK_FALSE(run.saddle);
  CHECK(run.records.size() <= 13);  // <= 12 iterations past the initial record

  const PlaneFrame f0 = plane_frame(th0, gt);
  Eigen::VectorXd theta = th0;
  for (std::size_t t = 1; t < run.records.size(); ++t) {
    const double phi_prev = run.records[t - 1].phi;
    theta = m_noiseless(theta, gt);
    const PlaneCoordinates pc = plane_coordinates(theta, gt, f0);
    const Eigen::Vector2d cyc = cycloid_point(phi_prev, 1.0);
    CHECK(std::abs(pc.x - cyc(0)) < 1e-12);
    CHECK(std::abs(pc.y - cyc(1)) < 1e-12);
    CHECK(pc.out_of_plane < 1e-12);

    // quadratic decay and the accuracy identities
    const double phi_t = run.records[t].phi;
    if (phi_prev <= 1.4) CHECK(phi_t / M_PI <= (phi_prev / M_PI) * (phi_prev / M_PI) + 1e-15);
    CHECK(run.records[t].theta_err <= phi_prev * phi_prev / (2 * M_PI) + 1e-15);
    const double predicted_weight_err = phi_prev / M_PI * std::abs(gt.tanh_nu_star);
    CHECK(run.records[t].weight_err == doctest::Approx(predicted_weight_err).epsilon(1e-12));
  }
}

TEST_CASE("population run flags the orthogonal saddle") {
  const GroundTruth gt = gt2d(0.5, 0.0);
  const PopulationRun run = run_population_noiseless(vec2(0.0, 1.0), gt, PopulationStop{20, 1e-12});
  CHECK(run.saddle);
  CHECK_FALSE(run.converged);
  for (const auto& rec : run.records) CHECK(rec.varphi == 0.0);  // stays orthogonal
}

TEST_CASE("general-SNR context invariants") {
  for (const double eta : {0.5, 1.0, 10.0, 1e3}) {
    for (const double varphi : {0.0, 0.3, 1.0, M_PI / 2}) {
      const GeneralSnrContext c = GeneralSnrContext::make(0.8, varphi, 1.0, eta);
      CHECK(c.sin_varphi_eta * std::sqrt(1.0 + 1.0 / (eta * eta)) ==
            doctest::Approx(std::sin(varphi)).epsilon(1e-12));
      CHECK(c.a_eta ==
            doctest::Approx(0.8 * eta * eta * std::sqrt(1 + 1 / (eta * eta))).epsilon(1e-12));
    }
  }
}

TEST_CASE("general update: fixed points at eta in {1, 10, 100}") {
  for (const double eta : {1.0, 10.0, 100.0}) {
    const GroundTruth gt = gt2d(0.7, 1.0 / eta);
    const double nus = gt.nu_star;

    const Eigen::VectorXd m_pos = m_general(gt.theta_star, nus, gt, kQuad);
    CHECK((m_pos - gt.theta_star).norm() / gt.theta_norm < 1e-3);
    CHECK(std::abs(n_general(gt.theta_star, nus, gt, kQuad) - gt.tanh_nu_star) < 1e-3);

    const Eigen::VectorXd m_neg = m_general((-gt.theta_star).eval(), -nus, gt, kQuad);
    CHECK((m_neg + gt.theta_star).norm() / gt.theta_norm < 1e-3);
    CHECK(std::abs(n_general((-gt.theta_star).eval(), -nus, gt, kQuad) + gt.tanh_nu_star) < 1e-3);

    // (0, 0) is exact
    CHECK(m_general(Eigen::VectorXd::Zero(2), 0.0, gt, kQuad).norm() == 0.0);
    CHECK(n_general(Eigen::VectorXd::Zero(2), 0.0, gt, kQuad) == 0.0);
  }
}

TEST_CASE("general update: high-SNR limit matches the noiseless closed form") {
  const GroundTruth gt = gt2d(0.5, 1e-3);  // eta = 1000
  const double varphi = M_PI / 4;
  const Eigen::VectorXd th = vec2(std::sin(varphi), std::cos(varphi));
  const Eigen::VectorXd m_q = m_general(th, 0.0, gt, kQuad);
  const Eigen::VectorXd m_cf = m_noiseless(th, gt);
  CHECK((m_q - m_cf).norm() < 1e-4);
  CHECK(std::abs(n_general(th, 0.0, gt, kQuad) - n_noiseless(th, gt)) < 1e-4);
}

TEST_CASE("general update: balanced odd symmetry makes N vanish") {
  const GroundTruth gt = gt2d(0.5, 0.5);
  const Eigen::VectorXd th = vec2(0.3, 0.4);
  CHECK(std::abs(n_general(th, 0.0, gt, kQuad)) < 1e-12);
}

TEST_CASE("general update: Monte Carlo oracle agreement") {
  const GroundTruth gt = gt2d(0.7, 0.1);  // eta = 10
  const double ang = M_PI / 6;
  const Eigen::VectorXd th = 0.8 * vec2(std::cos(ang), std::sin(ang));
  const double nu = 0.3;
  const Eigen::VectorXd m_q = m_general(th, nu, gt, kQuad);
  const double n_q = n_general(th, nu, gt, kQuad);
  const McUpdate mc = mc_update(th, nu, gt, 1000000, 2024);
  CHECK((m_q - mc.m).norm() < 4.0 * mc.se * std::sqrt(2.0));
  CHECK(std::abs(n_q - mc.n) < 4e-3);
}

TEST_CASE("quadrature spec validation") {
  QuadratureSpec bad;
  bad.nodes_per_axis = 8;
  const GroundTruth gt = gt2d(0.5, 1.0);
  CHECK_THROWS_AS(m_general(vec2(1.0, 0.0), 0.0, gt, bad), std::invalid_argument);
}

TEST_CASE("norm bound of the update") {
  const GroundTruth noiseless = gt2d(0.5, 0.0);
  CHECK(m_norm_bound(noiseless) == doctest::Approx(1.0).epsilon(1e-14));

  Eigen::VectorXd tiny(2);
  tiny << 1e-9, 0.0;
  const GroundTruth low = make_ground_truth(tiny, 0.5, 1.0);  // eta ~ 1e-9
  CHECK(m_norm_bound(low) == doctest::Approx(2.0 / M_PI).epsilon(1e-6));

  const GroundTruth unit = gt2d(0.5, 1.0);  // eta = 1, ||theta*|| = sigma = 1
  CHECK(m_norm_bound(unit) == doctest::Approx(0.5 + 2.0 / M_PI).epsilon(1e-12));
}

TEST_CASE("boundedness across random states") {
  CounterRng rng = CounterRng::stream(99, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const double eta = std::exp(rng.next_uniform(-2.0, 5.0));
    const double pi1 = rng.next_uniform(0.05, 0.95);
    const GroundTruth gt = gt2d(pi1, 1.0 / eta);
    const Eigen::VectorXd th = vec2(rng.next_gaussian(), rng.next_gaussian());
    if (th.norm() < 1e-3) continue;
    const double nu = rng.next_uniform(-2.0, 2.0);
    const double norm = m_general(th, nu, gt, kQuad).norm();
    CHECK(norm <= m_norm_bound(gt) + 1e-6);
  }
}

TEST_CASE("tanh moment of the Bessel-product variable") {
  const double f1 = expect_tanh_ax_x(1.0, kQuad);
  CHECK(f1 > (std::sqrt(13.0) - 1.0) / 6.0);
  CHECK(f1 < (std::sqrt(5.0) - 1.0) / 2.0);

  CHECK(expect_tanh_ax_x(0.01, kQuad) == doctest::Approx(0.01 - 3e-6).epsilon(1e-3));
  CHECK(std::abs(expect_tanh_ax_x(0.01, kQuad) - 0.009997) < 1e-5);
  CHECK(std::abs(expect_tanh_ax_x(1e3, kQuad) - 2.0 / M_PI) < 1e-3);

  // Lemma bounds across the magnitude range
  for (const double a : {0.01, 0.1, 1.0, 10.0, 1e3}) {
    const double v = expect_tanh_ax_x(a, kQuad);
    CHECK(v > (std::sqrt(12 * a * a + 1) - 1) / (6 * a));
    CHECK(v < (std::sqrt(4 * a * a + 1) - 1) / (2 * a));
  }
}

TEST_CASE("k* limits, fixture, and bracket") {
  CHECK(k_star(1e-3, kQuad, 1e-6) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(2e-3));
  CHECK(k_star(1e3, kQuad, 1e-6) == doctest::Approx(2.0 / M_PI).epsilon(2e-3));

  // regression fixture, recorded from the first converged evaluation
  const double k1 = k_star(1.0, kQuad, 1e-8);
  CHECK(k1 == doctest::Approx(0.66012351).epsilon(1e-6));
  CHECK(k1 > 1.0 / std::sqrt(3.0));
  CHECK(k1 < std::min(2.0 / M_PI * std::sqrt(2.0), 1.0));

  // doubling the per-axis budget moves the root by less than 1e-6
  QuadratureSpec dense;
  dense.nodes_per_axis = 256;
  CHECK(std::abs(k_star(1.0, dense, 1e-8) - k1) < 1e-6);
}

TEST_CASE("contraction sandwich along the orthogonal direction") {
  for (const double eta : {1.0, 10.0}) {
    const GroundTruth gt = gt2d(0.5, 1.0 / eta);
    const double ks = k_star(eta, kQuad, 1e-9);
    for (const double k : {0.3, 0.5, ks, 0.8, 1.2}) {
      const Eigen::VectorXd th = vec2(0.0, k);  // k ||theta*|| e_perp
      const double len = m_general(th, 0.0, gt, kQuad).norm() / gt.theta_norm;
      if (k < ks - 1e-9) {
        CHECK(len > k - 1e-4);
        CHECK(len < ks + 1e-4);
      } else if (k > ks + 1e-9) {
        CHECK(len < k + 1e-4);
        CHECK(len > ks - 1e-4);
      } else {
        CHECK(len == doctest::Approx(ks).epsilon(1e-6));
      }
      // N stays balanced on the orthogonal line
      CHECK(std::abs(n_general(th, 0.0, gt, kQuad)) < 1e-12);
    }
  }
}

TEST_CASE("deviation from the cycloid limit scales as eta^-2") {
  const double d3 = deviation_from_limit(1.0, M_PI / 4, 1e3, kQuad);
  const double d4 = deviation_from_limit(1.0, M_PI / 4, 1e4, kQuad);
  CHECK(d3 / d4 == doctest::Approx(100.0).epsilon(2.0));  // within a factor 3
  CHECK(d4 <= 1e-6);

  double prev = 1e300;
  for (const double eta : {10.0, 100.0, 1e3, 1e4}) {
    const double dev = deviation_from_limit(1.0, M_PI / 4, eta, kQuad);
    CHECK(dev <= prev + 1e-8);  // monotone within quadrature noise
    prev = dev;
  }

  // near-collinear regime: still dominated by the eta^-2 term
  const double dnc = deviation_from_limit(1.0, M_PI / 2 - 1e-6, 100.0, kQuad);
  CHECK(dnc < 10.0 / (100.0 * 100.0));
  CHECK(std::isfinite(dnc));
}

TEST_CASE("sign-product closed forms and quadrature verification") {
  const SignProductExpectations pi6 = sign_product_expectations(M_PI / 6);
  CHECK(pi6.sign_mean == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const SignProductExpectations zero = sign_product_expectations(0.0);
  CHECK(zero.sign_mean == 0.0);
  CHECK(zero.abs_product == doctest::Approx(2.0 / M_PI).epsilon(1e-14));
  CHECK(zero.g2_sign == 0.0);

  const SignProductExpectations half = sign_product_expectations(M_PI / 2);
  CHECK(half.sign_mean == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(half.abs_product == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(half.g2_sign == doctest::Approx(1.0).epsilon(1e-14));

  for (int i = 0; i <= 49; ++i) {
    const double varphi = -M_PI / 2 + M_PI * i / 49.0;
    const SignProductExpectations cf = sign_product_expectations(varphi);
    const SignProductExpectations q = sign_product_expectations_quadrature(varphi, kQuad);
    CHECK(std::abs(cf.sign_mean - q.sign_mean) < 1e-6);
    CHECK(std::abs(cf.abs_product - q.abs_product) < 1e-6);
    CHECK(std::abs(cf.g2_sign - q.g2_sign) < 1e-6);
  }
}

TEST_CASE("Bessel-product moments") {
  CHECK(std::abs(bessel_product_even_moment(1, kQuad) - 1.0) < 1e-6);
  CHECK(std::abs(bessel_product_even_moment(2, kQuad) - 9.0) < 1e-6);
}

TEST_CASE("out-of-plane component of the population maps") {
  CounterRng rng = CounterRng::stream(404, 0);
  const int d = 7;
  Eigen::VectorXd ts(d), th(d);
  for (int i = 0; i < d; ++i) {
    ts(i) = rng.next_gaussian();
    th(i) = rng.next_gaussian();
  }
  const GroundTruth gt_nl = make_ground_truth(ts, 0.6, 0.0);
  const PlaneFrame f = plane_frame(th, gt_nl);
  const auto out_of_plane = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r = v;
    r -= f.e_hat_1 * f.e_hat_1.dot(v);
    r -= f.e_hat_2 * f.e_hat_2.dot(v);
    return r.norm();
  };
  CHECK(out_of_plane(m_noiseless(th, gt_nl)) < 1e-14);

  const GroundTruth gt_gen = make_ground_truth(ts, 0.6, 0.2);
  CHECK(out_of_plane(m_general(th, 0.4, gt_gen, kQuad)) < 1e-10);
}
