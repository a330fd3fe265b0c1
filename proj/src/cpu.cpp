#include "icsmdp/envs/cpu.hpp"

#include <algorithm>
#include <climits>
#include <stdexcept>
#include <string>

namespace icsmdp {

void CpuSpec::validate() const {
  if (value_range < 2 || value_range > 12)
    throw std::invalid_argument("CpuSpec: value_range must lie in [2, 12]");
  if (!(train_fraction > 0.0) || train_fraction > 1.0)
    throw std::invalid_argument("CpuSpec: train_fraction must lie in (0, 1]");
  if (operand_mode == OperandMode::kHoldout && train_fraction >= 1.0)
    throw std::invalid_argument("CpuSpec: holdout mode needs train_fraction < 1");
  if (fixed_target >= value_range)
    throw std::invalid_argument("CpuSpec: fixed_target out of range");
  if (horizon < 2) throw std::invalid_argument("CpuSpec: horizon must be >= 2");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("CpuSpec: discount must lie in (0,1)");
  if (step_cost < 0.0) throw std::invalid_argument("CpuSpec: step_cost must be >= 0");
}

int CpuSpec::train_values() const {
  const int k = static_cast<int>(train_fraction * value_range + 1e-9);
  return std::clamp(k, 1, value_range);
}

CpuEnv::CpuEnv(const CpuSpec& spec) : spec_(spec), empty_(spec.value_range) {
  spec_.validate();
  const long long r = spec_.value_range;
  const long long e = r + 1;  // register/output domains include the empty sentinel
  const long long card = r * r * e * e * e * e * 4 * 2 * 2 * r;
  if (card > INT_MAX)
    throw std::invalid_argument("CpuSpec: interface state space exceeds int range");
  cfg_.n_agents = kNumRoles;
  cfg_.card_latent = 1;
  cfg_.card_interface = static_cast<int>(card);
  cfg_.horizon = spec_.horizon;
  cfg_.discount = spec_.discount;
  cfg_.seed = spec_.seed;
  cfg_.params["value_range"] = std::to_string(spec_.value_range);
  cfg_.params["train_fraction"] = std::to_string(spec_.train_fraction);
  cfg_.validate();
}

int CpuEnv::n_local_actions(AgentId agent) const {
  switch (agent) {
    case kStarter: return 1;
    case kLoaderA: return 1;
    case kLoaderB: return 1;
    case kAlu: return 4;
    case kSelector: return 3;  // latch X, Y, or R
    case kWriter: return 1;
    default: throw std::out_of_range("CpuEnv::n_local_actions: bad agent id");
  }
}

int CpuEnv::encode(const Machine& mc) const {
  const int r = spec_.value_range;
  const int e = r + 1;
  auto check = [](int v, int hi, const char* what) {
    if (v < 0 || v >= hi)
      throw std::out_of_range(std::string("CpuEnv::encode: ") + what + " out of range");
  };
  check(mc.mem_a, r, "mem_a");
  check(mc.mem_b, r, "mem_b");
  check(mc.out, e, "out");
  check(mc.rx, e, "rx");
  check(mc.ry, e, "ry");
  check(mc.rr, e, "rr");
  check(mc.sel, 4, "sel");
  check(mc.init, 2, "init");
  check(mc.committed, 2, "committed");
  check(mc.target, r, "target");
  int id = mc.mem_a;
  id = id * r + mc.mem_b;
  id = id * e + mc.out;
  id = id * e + mc.rx;
  id = id * e + mc.ry;
  id = id * e + mc.rr;
  id = id * 4 + mc.sel;
  id = id * 2 + mc.init;
  id = id * 2 + mc.committed;
  id = id * r + mc.target;
  return id;
}

CpuEnv::Machine CpuEnv::decode(int interface) const {
  if (interface < 0 || interface >= cfg_.card_interface)
    throw std::out_of_range("CpuEnv::decode: interface id out of range");
  const int r = spec_.value_range;
  const int e = r + 1;
  Machine mc;
  int id = interface;
  mc.target = id % r; id /= r;
  mc.committed = id % 2; id /= 2;
  mc.init = id % 2; id /= 2;
  mc.sel = id % 4; id /= 4;
  mc.rr = id % e; id /= e;
  mc.ry = id % e; id /= e;
  mc.rx = id % e; id /= e;
  mc.out = id % e; id /= e;
  mc.mem_b = id % r; id /= r;
  mc.mem_a = id;
  return mc;
}

std::vector<int> CpuEnv::achievable_outputs(int operand_a, int operand_b,
                                            int value_range) {
  std::vector<int> vals{operand_a, operand_b,
                        operand_a + operand_b, operand_a - operand_b,
                        std::max(operand_a, operand_b),
                        std::min(operand_a, operand_b)};
  std::vector<int> out;
  for (int v : vals)
    if (v >= 0 && v < value_range) out.push_back(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void CpuEnv::draw_operand_pair(Rng& rng, int& a, int& b) const {
  const int r = spec_.value_range;
  const int k = spec_.train_values();
  switch (spec_.operand_mode) {
    case CpuSpec::OperandMode::kTrain:
      a = rng.uniform_int(k);
      b = rng.uniform_int(k);
      return;
    case CpuSpec::OperandMode::kFull:
      a = rng.uniform_int(r);
      b = rng.uniform_int(r);
      return;
    case CpuSpec::OperandMode::kHoldout:
      // Rejection keeps the draw uniform over pairs with at least one
      // operand outside the train range.
      for (;;) {
        a = rng.uniform_int(r);
        b = rng.uniform_int(r);
        if (a >= k || b >= k) return;
      }
  }
  throw std::logic_error("CpuEnv::draw_operand_pair: bad operand mode");
}

JointState CpuEnv::reset(Rng& rng) const {
  int a = 0, b = 0;
  draw_operand_pair(rng, a, b);
  int target = spec_.fixed_target;
  if (target < 0) {
    const auto pool = achievable_outputs(a, b, spec_.value_range);
    target = pool[rng.uniform_int(static_cast<int>(pool.size()))];
  }
  return reset_to(a, b, target);
}

JointState CpuEnv::reset_to(int operand_a, int operand_b, int target) const {
  const int r = spec_.value_range;
  if (operand_a < 0 || operand_a >= r || operand_b < 0 || operand_b >= r)
    throw std::out_of_range("CpuEnv::reset_to: operand out of range");
  if (target < 0 || target >= r)
    throw std::out_of_range("CpuEnv::reset_to: target out of range");
  Machine mc;
  mc.mem_a = operand_a;
  mc.mem_b = operand_b;
  mc.out = empty_;
  mc.rx = empty_;
  mc.ry = empty_;
  mc.rr = empty_;
  mc.sel = kSelNone;
  mc.init = 0;
  mc.committed = 0;
  mc.target = target;
  JointState s;
  s.latent = 0;
  s.interface = encode(mc);
  s.privates.assign(kNumRoles, 0);
  s.active = kStarter;
  s.step = 0;
  return s;
}

StepOutcome CpuEnv::step(const JointState& state, const JointAction& action,
                         Rng& rng) const {
  (void)rng;  // the machine is deterministic
  check_step_args(state, action);
  Machine mc = decode(state.interface);

  switch (state.active) {
    case kStarter:
      mc.init = 1;
      mc.rx = empty_;
      mc.ry = empty_;
      mc.rr = empty_;
      mc.sel = kSelNone;
      break;
    case kLoaderA:
      mc.rx = mc.mem_a;
      break;
    case kLoaderB:
      mc.ry = mc.mem_b;
      break;
    case kAlu:
      if (mc.rx != empty_ && mc.ry != empty_) {
        int v = 0;
        switch (action.local) {
          case kAdd: v = mc.rx + mc.ry; break;
          case kSub: v = mc.rx - mc.ry; break;
          case kMax: v = std::max(mc.rx, mc.ry); break;
          case kMin: v = std::min(mc.rx, mc.ry); break;
          default: throw std::domain_error("CpuEnv::step: bad alu op");
        }
        if (v >= 0 && v < spec_.value_range) mc.rr = v;  // out of range: no-op
      }
      break;
    case kSelector:
      mc.sel = action.local + 1;  // kSelX / kSelY / kSelR
      break;
    case kWriter: {
      const int reg = mc.sel == kSelX   ? mc.rx
                      : mc.sel == kSelY ? mc.ry
                      : mc.sel == kSelR ? mc.rr
                                        : empty_;
      if (reg != empty_) {
        mc.out = reg;
        mc.committed = 1;
      }
      break;
    }
    default:
      throw std::out_of_range("CpuEnv::step: bad active agent");
  }

  StepOutcome out;
  out.reward = -spec_.step_cost;
  out.next = state;
  out.next.interface = encode(mc);
  out.next.privates[state.active] = action.local + 1;  // last local action
  out.next.step = state.step + 1;
  out.handoff = action.successor != state.active;

  if (is_stop(action.successor)) {
    if (mc.out == mc.target) out.reward += 1.0;
    out.next.active = kStop;
    out.terminated = true;
    return out;
  }
  out.next.active = action.successor;
  if (out.next.step >= spec_.horizon) {
    out.terminated = true;
    out.next.active = kStop;
  }
  return out;
}

std::vector<AgentId> CpuEnv::admissible_successors(int interface) const {
  std::vector<AgentId> out{kStarter, kLoaderA, kLoaderB, kAlu, kSelector, kWriter};
  if (decode(interface).committed) out.push_back(kStop);
  return out;
}

std::vector<AgentId> CpuEnv::decision_candidates(const JointState& state,
                                                 Rng& rng) const {
  // Every step is a decision step; the machine has no use for detaining, so
  // the choice set is the epoch action set (admissible minus the active
  // role).  Keeping the self-loop out of the choice set matters for
  // learning: its value slot can never receive a handoff update, so a
  // pessimistic tie would lock a greedy policy into detaining forever.
  (void)rng;
  return epoch_actions(state);
}

int CpuEnv::sample_internal_action(const JointState& state, Rng& rng) const {
  return rng.uniform_int(n_local_actions(state.active));
}

std::vector<ObservationMap> CpuEnv::default_observation_maps() const {
  std::vector<ObservationMap> maps;
  maps.reserve(kNumRoles);
  auto dec = [this](int m) { return decode(m); };
  const int empty = empty_;

  maps.push_back(ObservationMap(
      kStarter, 2, [dec](int m, int) { return dec(m).init; }, "cpu-starter"));
  maps.push_back(ObservationMap(
      kLoaderA, 2, [dec, empty](int m, int) { return dec(m).rx != empty ? 1 : 0; },
      "cpu-loader-a"));
  maps.push_back(ObservationMap(
      kLoaderB, 2, [dec, empty](int m, int) { return dec(m).ry != empty ? 1 : 0; },
      "cpu-loader-b"));
  // Which op would hit the target (first match), with the load status split
  // out: 4 = X unloaded, 5 = Y unloaded, 6 = loaded but no op matches.  The
  // split matters: the right continuation differs (load more vs pass through).
  maps.push_back(ObservationMap(
      kAlu, 7,
      [dec, empty](int m, int) {
        const Machine mc = dec(m);
        if (mc.rx == empty) return 4;
        if (mc.ry == empty) return 5;
        if (mc.rx + mc.ry == mc.target) return 0;
        if (mc.rx - mc.ry == mc.target) return 1;
        if (std::max(mc.rx, mc.ry) == mc.target) return 2;
        if (std::min(mc.rx, mc.ry) == mc.target) return 3;
        return 6;
      },
      "cpu-alu"));
  // Which register holds the target (computed register first); 3 = operands
  // not fully loaded yet, 4 = loaded but nothing matches.
  maps.push_back(ObservationMap(
      kSelector, 5,
      [dec, empty](int m, int) {
        const Machine mc = dec(m);
        if (mc.rr != empty && mc.rr == mc.target) return 0;
        if (mc.rx != empty && mc.rx == mc.target) return 1;
        if (mc.ry != empty && mc.ry == mc.target) return 2;
        if (mc.rx == empty || mc.ry == empty) return 3;
        return 4;
      },
      "cpu-selector"));
  // (committed, selected register matches target) as a 2-bit code.
  maps.push_back(ObservationMap(
      kWriter, 4,
      [dec, empty](int m, int) {
        const Machine mc = dec(m);
        const int reg = mc.sel == kSelX   ? mc.rx
                        : mc.sel == kSelY ? mc.ry
                        : mc.sel == kSelR ? mc.rr
                                          : empty;
        const int match = (reg != empty && reg == mc.target) ? 1 : 0;
        return mc.committed * 2 + match;
      },
      "cpu-writer"));
  return maps;
}

std::unique_ptr<CpuEnv> build_cpu(const CpuSpec& spec) {
  return std::make_unique<CpuEnv>(spec);
}

}  // namespace icsmdp
