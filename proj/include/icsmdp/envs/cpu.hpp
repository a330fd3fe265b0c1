#pragma once

#include <memory>
#include <vector>

#include "icsmdp/env.hpp"

namespace icsmdp {

// Six-role CPU programming task (adaptable regime: local actions and
// successor choices are both learned).
//
// The interface state is the whole machine: two read-only operand cells, an
// output cell, three registers, a selector latch, an init bit, a committed
// bit, and the target value.  Roles:
//   starter   — raises the init bit and clears registers/selector,
//   loader-A  — copies operand cell A into register X,
//   loader-B  — copies operand cell B into register Y,
//   alu       — applies add/sub/max/min to (X, Y) into register R;
//               out-of-range results and unloaded inputs are no-ops,
//   selector  — latches which register feeds the writer,
//   writer    — commits the selected register to the output cell.
// STOP becomes admissible once a commit has happened.  Reward is -step_cost
// per primitive step plus +1 when the episode STOPs with output == target.
//
// Observations are relational bits (e.g. "which ALU op would hit the
// target"), never raw cell values, so policies learned on a small operand
// range transfer to the full range.  Episode operands are drawn from the
// lowest train_fraction of the value range in kTrain mode, from pairs with
// at least one operand outside that range in kHoldout mode, and without
// restriction in kFull mode.  Targets are drawn from the achievable set so
// a reward is always attainable.
struct CpuSpec {
  enum class OperandMode { kTrain, kHoldout, kFull };

  int value_range = 10;         // cells hold integers in [0, value_range)
  double train_fraction = 0.2;  // lowest fraction of the range used in kTrain
  OperandMode operand_mode = OperandMode::kTrain;
  int fixed_target = -1;        // >= 0: every episode uses this target
  int horizon = 40;
  double discount = 0.9;
  double step_cost = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  int train_values() const;  // number of operand values in the train range
};

class CpuEnv : public Environment {
 public:
  enum Role { kStarter = 0, kLoaderA, kLoaderB, kAlu, kSelector, kWriter };
  static constexpr int kNumRoles = 6;
  enum AluOp { kAdd = 0, kSub, kMax, kMin };
  enum Sel { kSelNone = 0, kSelX, kSelY, kSelR };

  // Decoded interface state; register/output value == value_range means empty.
  struct Machine {
    int mem_a = 0;
    int mem_b = 0;
    int out = 0;
    int rx = 0;
    int ry = 0;
    int rr = 0;
    int sel = kSelNone;
    int init = 0;
    int committed = 0;
    int target = 0;
  };

  explicit CpuEnv(const CpuSpec& spec);

  const EnvConfig& config() const override { return cfg_; }
  double r_max() const override { return 1.0 + spec_.step_cost; }
  int n_local_actions(AgentId agent) const override;
  bool adaptable() const override { return true; }

  JointState reset(Rng& rng) const override;
  JointState reset_to(int operand_a, int operand_b, int target) const;

  StepOutcome step(const JointState& state, const JointAction& action,
                   Rng& rng) const override;

  std::vector<AgentId> admissible_successors(int interface) const override;
  std::vector<AgentId> decision_candidates(const JointState& state,
                                           Rng& rng) const override;
  int sample_internal_action(const JointState& state, Rng& rng) const override;
  std::vector<ObservationMap> default_observation_maps() const override;

  const CpuSpec& spec() const { return spec_; }

  int encode(const Machine& mc) const;
  Machine decode(int interface) const;

  // Outputs reachable from (a, b) under the instruction set:
  // {a+b, a-b, max, min} within range plus the pass-throughs {a, b}.
  static std::vector<int> achievable_outputs(int operand_a, int operand_b,
                                             int value_range);

 private:
  CpuSpec spec_;
  EnvConfig cfg_;
  int empty_;  // sentinel = value_range

  void draw_operand_pair(Rng& rng, int& a, int& b) const;
};

std::unique_ptr<CpuEnv> build_cpu(const CpuSpec& spec);

}  // namespace icsmdp
