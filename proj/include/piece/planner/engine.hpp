#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "piece/numerics/layers.hpp"

namespace piece::planner {

enum class Ablation { None, NoDomain, NoStruct };
std::string_view ablation_name(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view name);  // "none", "no-domain", "no-struct"

struct EngineDims {
  std::size_t width = 128;      // decoder hidden width (query source and fused output)
  std::size_t knowledge = 64;   // columns of R_k
  std::size_t structure = 64;   // columns of R_s
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
};

// Separate projections per cycle. Cycle 1 is keyed by knowledge and reads
// structural values; cycle 2 is keyed by structure and reads knowledge values.
struct PlanningEngine {
  num::Tensor query;            // width x d_k
  num::Tensor knowledge_key;    // d_rk x d_k
  num::Tensor structure_value;  // d_rs x d_v
  num::Tensor structure_key;    // d_rs x d_k
  num::Tensor knowledge_value;  // d_rk x d_v
  num::Dense fuse;              // 2 d_v -> width

  static PlanningEngine init(const num::Initializer& init, const std::string& name, const EngineDims& dims);
  void collect(const std::string& prefix, num::NamedParams& out);
  std::size_t value_dim() const { return knowledge_value.cols(); }
};

struct RotationResult {
  num::Var fused;               // t x 2 d_v, cycle 1 then cycle 2
  num::Var knowledge_weights;   // t x n, cycle 1
  num::Var structure_weights;   // t x n, cycle 2
};

// Throws ShapeError when R_k and R_s row counts or keep length differ, and
// std::domain_error when no position is kept.
RotationResult rotate_attend(const PlanningEngine& engine, num::Var q_states, num::Var r_k, num::Var r_s,
                             const std::vector<bool>& keep);

num::Var fuse(const PlanningEngine& engine, num::Var r_rep);

// Planner memory for the decoder: the rotation with an all-masked cycle 1 or an
// ablated cycle replaced by zeros, then fused. Returns t x width.
num::Var plan_memory(const PlanningEngine& engine, num::Var q_states, num::Var r_k, num::Var r_s,
                     const std::vector<bool>& keep, Ablation ablation);

}  // namespace piece::planner
