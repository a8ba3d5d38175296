#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "doctest.h"
#include "piece/error.hpp"
#include "piece/numerics/gradcheck.hpp"
#include "piece/sheaf/sheaf.hpp"
#include "test_util.hpp"

using namespace piece;
using namespace piece::sheaf;
using num::Tape;
using num::Tensor;
using num::Var;
using piece::testing::random_tensor;

namespace {

corpus::Dialogue dialogue_of(std::vector<corpus::Speaker> speakers) {
  corpus::Dialogue d;
  d.id = "g";
  for (std::size_t i = 0; i < speakers.size(); ++i) d.utterances.push_back({i, speakers[i], "x", {}});
  return d;
}

DialogueGraph random_graph(num::Rng& rng, std::size_t nodes) {
  DialogueGraph g{nodes, {}};
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j)
      if (rng.bernoulli(0.4)) g.edges.push_back({i, j, EdgeKind::Chain});
  return g;
}

SheafStructure constant_sheaf(Tape& tape, const DialogueGraph& g, const Tensor& map) {
  SheafStructure s{map.rows(), {}, {}};
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    s.from_maps.push_back(tape.constant(map));
    s.to_maps.push_back(tape.constant(map));
  }
  return s;
}

SheafStructure random_sheaf(Tape& tape, num::Rng& rng, const DialogueGraph& g, std::size_t ds) {
  SheafStructure s{ds, {}, {}};
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    s.from_maps.push_back(tape.constant(random_tensor(rng, ds, ds)));
    s.to_maps.push_back(tape.constant(random_tensor(rng, ds, ds)));
  }
  return s;
}

// I - D^{-1/2} A D^{-1/2} with zero rows and columns at isolated nodes.
Tensor normalized_graph_laplacian(const DialogueGraph& g) {
  const std::size_t n = g.nodes;
  Tensor a = g.adjacency();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (deg[i] == 0.0 || deg[j] == 0.0) continue;
      out[i * n + j] = (i == j ? 1.0 : 0.0) - a[i * n + j] / std::sqrt(deg[i] * deg[j]);
    }
  return out;
}

std::vector<double> eigen_oracle(const Tensor& m) {
  const auto n = static_cast<Eigen::Index>(m.rows());
  Eigen::MatrixXd e(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) e(i, j) = m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
  return {solver.eigenvalues().data(), solver.eigenvalues().data() + n};
}

double asymmetry(const Tensor& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) worst = std::max(worst, std::abs(m.at(i, j) - m.at(j, i)));
  return worst;
}

}  // namespace

TEST_CASE("graph construction") {
  using corpus::Speaker;
  DialogueGraph g = build_graph(dialogue_of({Speaker::Therapist, Speaker::Client, Speaker::Therapist}));
  CHECK(g.edges == std::vector<Edge>{{0, 1, EdgeKind::Chain}, {1, 2, EdgeKind::Chain}});
  CHECK(g.adjacency() == Tensor::matrix({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
  CHECK(build_graph(dialogue_of({Speaker::Client})).edges.empty());

  auto d = dialogue_of({Speaker::Therapist, Speaker::Client, Speaker::Client, Speaker::Therapist, Speaker::Client});
  DialogueGraph skip = build_graph(d, {true});
  std::vector<Edge> expected{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 3, EdgeKind::SameSpeaker}, {2, 4, EdgeKind::SameSpeaker}};
  CHECK(skip.edges == expected);
  CHECK_NOTHROW(validate_graph(skip));
  CHECK(build_graph(d, {true}).edges == skip.edges);
  CHECK_THROWS_AS(validate_graph({2, {{0, 1}, {1, 0}}}), ShapeError);
}

TEST_CASE("two-node identity sheaf") {
  Tape tape;
  DialogueGraph g{2, {{0, 1}}};
  SheafLaplacian lap = assemble_laplacian(tape, g, constant_sheaf(tape, g, Tensor::identity(1)));
  CHECK(lap.unnormalized.value() == Tensor::matrix({{1, -1}, {-1, 1}}));
  CHECK(num::max_abs_diff(lap.normalized.value(), Tensor::matrix({{1, -1}, {-1, 1}})) < 1e-15);
  SpectralRange r = spectral_range(lap.normalized.value());
  CHECK(std::abs(r.min) < 1e-12);
  CHECK(std::abs(r.max - 2.0) < 1e-12);
}

TEST_CASE("identity sheaf reduces to the normalized graph Laplacian") {
  num::Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    DialogueGraph g = random_graph(rng, 1 + rng.below(10));
    Tape tape;
    SheafLaplacian lap = assemble_laplacian(tape, g, constant_sheaf(tape, g, Tensor::identity(1)));
    CHECK(num::max_abs_diff(lap.normalized.value(), normalized_graph_laplacian(g)) <= 1e-12);
  }
}

TEST_CASE("random sheaves give symmetric PSD Laplacians with spectrum in [0, 2]") {
  num::Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ds = 1 + rng.below(3);
    DialogueGraph g = trial % 2 ? random_graph(rng, 2 + rng.below(8)) : DialogueGraph{5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}};
    Tape tape;
    SheafLaplacian lap = assemble_laplacian(tape, g, random_sheaf(tape, rng, g, ds));
    const Tensor& delta = lap.normalized.value();
    CHECK(asymmetry(delta) < 1e-12);
    CHECK(asymmetry(lap.unnormalized.value()) < 1e-12);
    auto oracle = eigen_oracle(delta);
    auto ours = spectral_range(delta);
    CHECK(oracle.front() >= -1e-10);
    CHECK(oracle.back() <= 2.0 + 1e-10);
    CHECK(std::abs(ours.min - oracle.front()) < 1e-9);
    CHECK(std::abs(ours.max - oracle.back()) < 1e-9);
  }
}

TEST_CASE("zero learner gives zero maps and zero Laplacian") {
  SheafConfig cfg{2, 3, true};
  MapLearner learner = MapLearner::init(num::Initializer(1), "l", 4, cfg);
  learner.map.weight = Tensor::zeros(learner.map.weight.shape());
  learner.map.bias = Tensor::zeros(learner.map.bias.shape());
  num::Rng rng(2);
  Tape tape;
  DialogueGraph g{3, {{0, 1}, {1, 2}}};
  SheafStructure s = learn_restriction_maps(g, tape.constant(random_tensor(rng, 3, 4)), learner);
  for (Var m : s.from_maps) CHECK(m.value() == Tensor::zeros({2, 2}));
  SheafLaplacian lap = assemble_laplacian(tape, g, s);
  CHECK(lap.normalized.value() == Tensor::zeros({6, 6}));

  learner.map.bias = Tensor::matrix({{0.5, -0.25}});
  Tape fresh;
  SheafStructure b = learn_restriction_maps(g, fresh.constant(random_tensor(rng, 3, 4)), learner);
  CHECK(b.to_maps[1].value() == Tensor::matrix({{std::tanh(0.5), 0}, {0, std::tanh(-0.25)}}));
}

TEST_CASE("restriction maps depend only on their endpoints") {
  SheafConfig cfg{2, 3, true};
  MapLearner learner = MapLearner::init(num::Initializer(3), "l", 2, cfg);
  num::Rng rng(4);
  Tensor x = random_tensor(rng, 3, 2);
  Tensor y = x;
  y[0] = 5.0;  // node 0 is not on edge 1
  Tape tape;
  DialogueGraph g{3, {{0, 1}, {1, 2}}};
  SheafStructure a = learn_restriction_maps(g, tape.constant(x), learner);
  SheafStructure b = learn_restriction_maps(g, tape.constant(y), learner);
  CHECK(a.from_maps[1].value() == b.from_maps[1].value());
  CHECK(a.to_maps[1].value() == b.to_maps[1].value());
  CHECK_FALSE(a.from_maps[0].value() == b.from_maps[0].value());
}

TEST_CASE("single node convolution and graph-convolution reduction") {
  num::Rng rng(5);
  SheafConfig cfg{2, 3, true};
  ConvolutionParams p = ConvolutionParams::init(num::Initializer(6), "c", 4, cfg);
  p.stalk_mix = Tensor::identity(2);
  Tape tape;
  Tensor x = random_tensor(rng, 1, 4);
  Var lap = tape.constant(Tensor::zeros({2, 2}));
  Var out = sheaf_convolve(lap, tape.constant(x), p, 2);
  Tensor xw = num::matmul_nn(x, p.feature_map);
  for (double& v : xw.data()) v = std::max(v, 0.0);
  Tensor expected({1, 6}, {xw[0], xw[1], xw[2], xw[0], xw[1], xw[2]});
  CHECK(out.value() == expected);

  SheafConfig one{1, 3, true};
  ConvolutionParams q = ConvolutionParams::init(num::Initializer(7), "c", 4, one);
  DialogueGraph g{4, {{0, 1}, {1, 2}, {0, 3}}};
  Tensor feats = random_tensor(rng, 4, 4);
  SheafLaplacian l = assemble_laplacian(tape, g, constant_sheaf(tape, g, Tensor::identity(1)));
  Tensor prop = Tensor::identity(4);
  Tensor norm = normalized_graph_laplacian(g);
  for (std::size_t i = 0; i < 16; ++i) prop[i] -= norm[i];
  Tensor gcn = num::matmul_nn(prop, num::matmul_nn(feats, q.feature_map));
  for (double& v : gcn.data()) v = std::max(v * q.stalk_mix[0], 0.0);
  CHECK(num::max_abs_diff(sheaf_convolve(l.normalized, tape.constant(feats), q, 1).value(), gcn) < 1e-12);
}

TEST_CASE("disconnected components do not interact") {
  num::Rng rng(8);
  SheafConfig cfg{2, 3, true};
  SheafParams p = SheafParams::init(num::Initializer(9), "s", 3, cfg);
  DialogueGraph g{5, {{0, 1}, {2, 3}, {3, 4}}};
  Tensor x = random_tensor(rng, 5, 3);
  Tensor y = x;
  for (std::size_t j = 0; j < 3; ++j) y[3 * 3 + j] += 0.7;
  Tape tape;
  StructuralResult a = encode_structure(tape, g, tape.constant(x), p);
  StructuralResult b = encode_structure(tape, g, tape.constant(y), p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 4; j < 10; ++j) CHECK(a.laplacian.value().at(i, j) == 0.0);
  CHECK(a.r_s.value().row_copy(0) == b.r_s.value().row_copy(0));
  CHECK(a.r_s.value().row_copy(1) == b.r_s.value().row_copy(1));
  CHECK(a.r_s.rows() == 5);
  CHECK(a.r_s.cols() == 3);
}

TEST_CASE("structural projection") {
  num::Dense zero{Tensor::zeros({4, 2}), Tensor::zeros({1, 2})};
  num::Rng rng(10);
  Tape tape;
  Tensor r = random_tensor(rng, 3, 4);
  CHECK(project_structural(tape.constant(r), zero).value() == Tensor::zeros({3, 2}));
  zero.bias = Tensor::matrix({{0.5, -1.0}});
  Tape fresh;
  CHECK(project_structural(fresh.constant(r), zero).value() == Tensor::matrix({{0.5, 0}, {0.5, 0}, {0.5, 0}}));
  num::Dense dense = num::Dense::init(num::Initializer(3), "p", 4, 2);
  Tensor r2 = r;
  r2[0] += 1.0;
  Var a = project_structural(tape.constant(r), dense), b = project_structural(tape.constant(r2), dense);
  CHECK(a.value().row_copy(1) == b.value().row_copy(1));
  CHECK(a.value().row_copy(2) == b.value().row_copy(2));
}

TEST_CASE("pseudo-inverse square root") {
  Tape tape;
  Var m = tape.constant(Tensor::matrix({{4, 0}, {0, 0}}));
  CHECK(num::psd_inverse_sqrt(m).value() == Tensor::matrix({{0.5, 0}, {0, 0}}));
  num::Rng rng(11);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor a = random_tensor(rng, 3, 3);
    Tensor w = random_tensor(rng, 3, 3);
    num::NamedParams params{{"a", &a}};
    auto loss = [&](Tape& t) {
      Var av = t.param(a);
      Var spd = num::add(num::matmul(num::transpose(av), av), t.constant(Tensor::identity(3)));
      return num::weighted_sum(num::psd_inverse_sqrt(spd), w);
    };
    Tape check;
    Var av = check.param(a);
    Var spd = num::add(num::matmul(num::transpose(av), av), check.constant(Tensor::identity(3)));
    Tensor root = num::psd_inverse_sqrt(spd).value();
    Tensor back = num::matmul_nn(num::matmul_nn(root, spd.value()), root);
    CHECK(num::max_abs_diff(back, Tensor::identity(3)) < 1e-10);
    auto res = num::check_gradients(loss, params);
    CHECK_MESSAGE(res.max_relative_error < 1e-5, "seed ", seed);
  }
}

TEST_CASE("sheaf gradients match finite differences") {
  for (bool diagonal : {true, false}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SheafConfig cfg{2, 3, diagonal};
      SheafParams p = SheafParams::init(num::Initializer(seed + 40), "s", 3, cfg);
      num::Rng rng(seed + 60);
      Tensor x = random_tensor(rng, 4, 3);
      Tensor w = random_tensor(rng, 4, 3);
      DialogueGraph g{4, {{0, 1}, {1, 2}, {2, 3}, {0, 2}}};
      num::NamedParams params;
      p.collect("s.", params);
      params.emplace_back("x", &x);
      auto loss = [&](Tape& t) { return num::weighted_sum(encode_structure(t, g, t.param(x), p).r_s, w); };
      auto res = num::check_gradients(loss, params);
      CHECK_MESSAGE(res.max_relative_error < 1e-5, "diagonal ", diagonal, " seed ", seed, " worst ", res.worst_param);
    }
  }
}
