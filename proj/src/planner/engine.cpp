#include "piece/planner/engine.hpp"

#include <algorithm>

#include "piece/error.hpp"

namespace piece::planner {

using num::Tape;
using num::Tensor;
using num::Var;

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoDomain: return "no-domain";
    case Ablation::NoStruct: return "no-struct";
  }
  return "?";
}

std::optional<Ablation> parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::None, Ablation::NoDomain, Ablation::NoStruct})
    if (ablation_name(a) == name) return a;
  return std::nullopt;
}

PlanningEngine PlanningEngine::init(const num::Initializer& init, const std::string& name, const EngineDims& d) {
  return PlanningEngine{init.uniform(name + ".query", {d.width, d.key_dim}, d.width),
                        init.uniform(name + ".knowledge_key", {d.knowledge, d.key_dim}, d.knowledge),
                        init.uniform(name + ".structure_value", {d.structure, d.value_dim}, d.structure),
                        init.uniform(name + ".structure_key", {d.structure, d.key_dim}, d.structure),
                        init.uniform(name + ".knowledge_value", {d.knowledge, d.value_dim}, d.knowledge),
                        num::Dense::init(init, name + ".fuse", 2 * d.value_dim, d.width)};
}

void PlanningEngine::collect(const std::string& prefix, num::NamedParams& out) {
  out.emplace_back(prefix + "query", &query);
  out.emplace_back(prefix + "knowledge_key", &knowledge_key);
  out.emplace_back(prefix + "structure_value", &structure_value);
  out.emplace_back(prefix + "structure_key", &structure_key);
  out.emplace_back(prefix + "knowledge_value", &knowledge_value);
  fuse.collect(prefix + "fuse.", out);
}

namespace {

void check_inputs(Var q_states, Var r_k, Var r_s, const std::vector<bool>& keep) {
  if (r_k.rows() != r_s.rows()) {
    throw ShapeError("rotate_attend: R_k has " + std::to_string(r_k.rows()) + " rows, R_s has " +
                     std::to_string(r_s.rows()));
  }
  if (keep.size() != r_k.rows()) throw ShapeError("rotate_attend: keep length differs from row count");
  if (q_states.rows() == 0) throw ShapeError("rotate_attend: no query states");
}

}  // namespace

RotationResult rotate_attend(const PlanningEngine& e, Var q_states, Var r_k, Var r_s, const std::vector<bool>& keep) {
  check_inputs(q_states, r_k, r_s, keep);
  Tape& t = q_states.tape();
  Var q = num::matmul(q_states, t.param(e.query));
  num::AttentionResult knowledge = num::scaled_dot_attention(q, num::matmul(r_k, t.param(e.knowledge_key)),
                                                             num::matmul(r_s, t.param(e.structure_value)), &keep);
  num::AttentionResult structure = num::scaled_dot_attention(q, num::matmul(r_s, t.param(e.structure_key)),
                                                             num::matmul(r_k, t.param(e.knowledge_value)));
  return {num::concat_cols({knowledge.output, structure.output}), knowledge.weights, structure.weights};
}

Var fuse(const PlanningEngine& engine, Var r_rep) {
  if (r_rep.cols() != engine.fuse.in()) throw ShapeError("fuse: width mismatch");
  return engine.fuse.forward(r_rep);
}

Var plan_memory(const PlanningEngine& e, Var q_states, Var r_k, Var r_s, const std::vector<bool>& keep,
                Ablation ablation) {
  check_inputs(q_states, r_k, r_s, keep);
  Tape& t = q_states.tape();
  const std::size_t rows = q_states.rows(), dv = e.value_dim();
  Var q = num::matmul(q_states, t.param(e.query));
  const bool any_kept = std::any_of(keep.begin(), keep.end(), [](bool k) { return k; });
  Var knowledge = ablation != Ablation::NoDomain && any_kept
                      ? num::scaled_dot_attention(q, num::matmul(r_k, t.param(e.knowledge_key)),
                                                  num::matmul(r_s, t.param(e.structure_value)), &keep)
                            .output
                      : t.constant(Tensor::zeros({rows, dv}));
  Var structure = ablation != Ablation::NoStruct
                      ? num::scaled_dot_attention(q, num::matmul(r_s, t.param(e.structure_key)),
                                                  num::matmul(r_k, t.param(e.knowledge_value)))
                            .output
                      : t.constant(Tensor::zeros({rows, dv}));
  return fuse(e, num::concat_cols({knowledge, structure}));
}

}  // namespace piece::planner
