#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "icsmdp/envs/cpu.hpp"
#include "icsmdp/envs/graphs.hpp"
#include "icsmdp/envs/routing.hpp"
#include "icsmdp/learner.hpp"

using namespace icsmdp;

namespace {

// Counts lines of the form "u v" and checks u < v, both in range.
int parse_edge_list(const std::string& text, int n_nodes) {
  std::istringstream in(text);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    int u = -1, v = -1;
    REQUIRE(static_cast<bool>(fields >> u >> v));
    REQUIRE(u < v);
    REQUIRE(u >= 0);
    REQUIRE(v < n_nodes);
    ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("graph families build connected, deterministic instances") {
  for (auto family : {GraphFamily::kErdosRenyi, GraphFamily::kBarabasiAlbert,
                      GraphFamily::kWattsStrogatz, GraphFamily::kChain}) {
    GraphSpec spec;
    spec.family = family;
    spec.n_nodes = 40;
    spec.seed = 11;
    const Graph g = build_graph(spec);
    CAPTURE(to_string(family));
    CHECK(g.n_nodes == 40);
    CHECK(g.connected());
    for (int u = 0; u < g.n_nodes; ++u) {
      CHECK(std::is_sorted(g.neighbors[u].begin(), g.neighbors[u].end()));
      CHECK(std::adjacent_find(g.neighbors[u].begin(), g.neighbors[u].end()) ==
            g.neighbors[u].end());
      CHECK(std::count(g.neighbors[u].begin(), g.neighbors[u].end(), u) == 0);
    }
    // Same spec, same seed: bitwise identical edge lists.
    const Graph g2 = build_graph(spec);
    CHECK(g.edge_list() == g2.edge_list());
    CHECK(parse_edge_list(g.edge_list(), g.n_nodes) == g.n_edges());
  }
  CHECK(graph_family_from_string("watts-strogatz") == GraphFamily::kWattsStrogatz);
  CHECK_THROWS_AS(graph_family_from_string("petersen"), std::invalid_argument);
}

TEST_CASE("chain graphs and breadth-first distances") {
  GraphSpec spec;
  spec.family = GraphFamily::kChain;
  spec.n_nodes = 7;
  const Graph g = build_graph(spec);
  CHECK(g.n_edges() == 6);
  for (int v = 1; v + 1 < 7; ++v) {
    REQUIRE(g.neighbors[v].size() == 2);
    CHECK(g.neighbors[v][0] == v - 1);
    CHECK(g.neighbors[v][1] == v + 1);
  }
  const auto dist = bfs_distances(g, 2);
  for (int v = 0; v < 7; ++v) CHECK(dist[v] == std::abs(v - 2));
  CHECK_THROWS_AS(bfs_distances(g, 9), std::out_of_range);
}

TEST_CASE("family-specific shape properties") {
  SUBCASE("watts-strogatz keeps total edge count of the ring lattice") {
    GraphSpec spec;
    spec.family = GraphFamily::kWattsStrogatz;
    spec.n_nodes = 60;
    spec.seed = 5;
    const Graph g = build_graph(spec);
    // Rewiring moves edges but never changes their number: n * k / 2.
    CHECK(g.n_edges() == 60 * 4 / 2);
  }
  SUBCASE("barabasi-albert attaches two edges per arriving node") {
    GraphSpec spec;
    spec.family = GraphFamily::kBarabasiAlbert;
    spec.n_nodes = 50;
    spec.seed = 7;
    const Graph g = build_graph(spec);
    // Seed path has ba_attachment edges; every later node adds exactly
    // ba_attachment distinct ones.
    CHECK(g.n_edges() == 2 + (50 - 3) * 2);
    const auto degsum = 2 * g.n_edges();
    CHECK(degsum == 2 * (2 + 47 * 2));
  }
  SUBCASE("erdos-renyi edge count near expectation") {
    GraphSpec spec;
    spec.family = GraphFamily::kErdosRenyi;
    spec.n_nodes = 80;
    spec.seed = 3;
    const Graph g = build_graph(spec);
    const double p = 2.0 * std::log(80.0) / 80.0;
    const double mean = p * 80 * 79 / 2;
    const double sd = std::sqrt(mean * (1 - p));
    CHECK(std::abs(g.n_edges() - mean) <= 5 * sd);
  }
  SUBCASE("invalid specs throw") {
    GraphSpec spec;
    spec.n_nodes = 1;
    CHECK_THROWS_AS(build_graph(spec), std::invalid_argument);
    spec.n_nodes = 10;
    spec.family = GraphFamily::kWattsStrogatz;
    spec.ws_degree = 3;  // odd
    CHECK_THROWS_AS(build_graph(spec), std::invalid_argument);
  }
}

TEST_CASE("routing admissible sets are neighbors plus self plus conditional STOP") {
  RoutingSpec spec;
  spec.graph.family = GraphFamily::kErdosRenyi;
  spec.graph.n_nodes = 14;
  spec.graph.seed = 21;
  auto env = build_routing(spec);
  const Graph& g = env->graph();
  for (int loc = 0; loc < g.n_nodes; ++loc) {
    for (int dest : {0, 5, loc}) {
      const int m = env->encode(loc, dest, 0);
      auto adm = env->admissible_successors(m);
      std::vector<AgentId> expect = g.neighbors[loc];
      expect.push_back(loc);
      std::sort(expect.begin(), expect.end());
      if (loc == dest) expect.push_back(kStop);
      CHECK(adm == expect);
    }
  }
  // Epoch actions drop the active holder but keep everything else.
  JointState s = env->reset_to(3, 9);
  auto ea = env->epoch_actions(s);
  CHECK(std::count(ea.begin(), ea.end(), 3) == 0);
  CHECK(ea.size() + 1 == env->admissible_successors(s.interface).size());
}

TEST_CASE("routing chain trace: the unique optimal path") {
  RoutingSpec spec;
  spec.graph.family = GraphFamily::kChain;
  spec.graph.n_nodes = 4;
  auto env = build_routing(spec);
  Rng rng(0);
  JointState s = env->reset_to(0, 3);
  double undiscounted = 0.0;

  for (int hop : {1, 2, 3}) {
    auto out = env->step(s, JointAction{0, hop}, rng);
    CHECK(out.reward == doctest::Approx(-spec.step_cost));
    CHECK(out.handoff);
    CHECK_FALSE(out.terminated);
    CHECK(env->location_of(out.next.interface) == hop);
    CHECK(env->flag_of(out.next.interface) == 0);
    CHECK(out.next.active == hop);
    undiscounted += out.reward;
    s = out.next;
  }
  // At the destination STOP is admissible and pays +1.
  auto adm = env->admissible_successors(s.interface);
  REQUIRE(adm.back() == kStop);
  auto out = env->step(s, JointAction{0, kStop}, rng);
  CHECK(out.terminated);
  CHECK(out.reward == doctest::Approx(1.0));
  undiscounted += out.reward;
  CHECK(undiscounted == doctest::Approx(1.0 - 3 * spec.step_cost));

  // STOP away from the destination is inadmissible.
  JointState mid = env->reset_to(1, 3);
  CHECK_THROWS_AS(env->step(mid, JointAction{0, kStop}, rng), std::domain_error);
}

TEST_CASE("routing detain records the flag and costs nothing") {
  RoutingSpec spec;
  spec.graph.family = GraphFamily::kChain;
  spec.graph.n_nodes = 5;
  auto env = build_routing(spec);
  Rng rng(0);
  JointState s = env->reset_to(2, 4);
  auto out = env->step(s, JointAction{0, 2}, rng);  // self-successor
  CHECK(out.reward == 0.0);
  CHECK_FALSE(out.handoff);
  CHECK(out.next.active == 2);
  CHECK(env->flag_of(out.next.interface) == 1);
  CHECK(env->location_of(out.next.interface) == 2);
  // The next forward hop clears the flag again.
  auto out2 = env->step(out.next, JointAction{0, 3}, rng);
  CHECK(env->flag_of(out2.next.interface) == 0);
  // Private states ride along untouched.
  CHECK(out2.next.privates == s.privates);
}

TEST_CASE("routing tabular learner reaches shortest paths on a random graph") {
  RoutingSpec spec;
  spec.graph.family = GraphFamily::kErdosRenyi;
  spec.graph.n_nodes = 12;
  spec.graph.seed = 4;
  spec.horizon = 60;
  auto env = build_routing(spec);
  const Graph& g = env->graph();

  LearnerConfig cfg;
  cfg.backend = LearnerConfig::Backend::kTabular;
  cfg.schedule = LearnerConfig::StepSchedule::kConstant;
  cfg.constant_eta = 0.5;
  cfg.eps0 = 1.0;
  cfg.eps_floor = 0.2;
  cfg.budget_epochs = 40000;
  cfg.q_init = -1.0;  // keep unexplored slots (incl. detain) below any real value
  cfg.seed = 18;
  IcqTrainer trainer(*env, env->default_observation_maps(), cfg);
  Rng train_rng(99);
  trainer.train(train_rng);

  // Greedy rollouts for every ordered pair against the BFS oracle.
  int pairs = 0, delivered = 0, shortest = 0;
  Rng rng(0);
  for (int src = 0; src < g.n_nodes; ++src) {
    const auto dist = bfs_distances(g, src);
    for (int dest = 0; dest < g.n_nodes; ++dest) {
      if (src == dest) continue;
      ++pairs;
      JointState s = env->reset_to(src, dest);
      int hops = 0;
      bool arrived = false;
      while (true) {
        const auto cands = env->decision_candidates(s, rng);
        const int obs = env->default_observation_maps()[s.active](s.interface, 0);
        const AgentId choice =
            select_successor(trainer.q_beta(s.active), obs, cands, 0.0,
                             g.n_nodes, rng);
        const auto out = env->step(s, JointAction{0, choice}, rng);
        if (!is_stop(choice) && choice != s.active) ++hops;
        s = out.next;
        if (out.terminated) {
          arrived = is_stop(choice);
          break;
        }
      }
      if (arrived) {
        ++delivered;
        if (hops == dist[dest]) ++shortest;
      }
    }
  }
  CHECK(delivered == pairs);
  CHECK(shortest >= static_cast<int>(0.95 * pairs));
}

TEST_CASE("cpu interface encoding round-trips") {
  CpuSpec spec;
  auto env = build_cpu(spec);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    CpuEnv::Machine mc;
    mc.mem_a = rng.uniform_int(10);
    mc.mem_b = rng.uniform_int(10);
    mc.out = rng.uniform_int(11);
    mc.rx = rng.uniform_int(11);
    mc.ry = rng.uniform_int(11);
    mc.rr = rng.uniform_int(11);
    mc.sel = rng.uniform_int(4);
    mc.init = rng.uniform_int(2);
    mc.committed = rng.uniform_int(2);
    mc.target = rng.uniform_int(10);
    const int id = env->encode(mc);
    const auto back = env->decode(id);
    CHECK(back.mem_a == mc.mem_a);
    CHECK(back.mem_b == mc.mem_b);
    CHECK(back.out == mc.out);
    CHECK(back.rx == mc.rx);
    CHECK(back.ry == mc.ry);
    CHECK(back.rr == mc.rr);
    CHECK(back.sel == mc.sel);
    CHECK(back.init == mc.init);
    CHECK(back.committed == mc.committed);
    CHECK(back.target == mc.target);
  }
  CHECK_THROWS_AS(env->decode(-1), std::out_of_range);
}

TEST_CASE("cpu constructive trace: add program reaches the target") {
  CpuSpec spec;
  auto env = build_cpu(spec);
  Rng rng(0);
  JointState s = env->reset_to(2, 3, 5);
  CHECK(s.active == CpuEnv::kStarter);
  double undiscounted = 0.0;

  auto drive = [&](int local, AgentId successor) {
    auto out = env->step(s, JointAction{local, successor}, rng);
    undiscounted += out.reward;
    s = out.next;
    return out;
  };

  drive(0, CpuEnv::kLoaderA);                    // starter: init
  drive(0, CpuEnv::kLoaderB);                    // loader-A: rx <- 2
  CHECK(env->decode(s.interface).rx == 2);
  drive(0, CpuEnv::kAlu);                        // loader-B: ry <- 3
  drive(CpuEnv::kAdd, CpuEnv::kSelector);        // alu: rr <- 5
  CHECK(env->decode(s.interface).rr == 5);
  drive(2, CpuEnv::kWriter);                     // selector: latch R
  // The commit step: STOP is not admissible yet, so the writer detains.
  auto adm_before = env->admissible_successors(s.interface);
  CHECK(std::count(adm_before.begin(), adm_before.end(), kStop) == 0);
  drive(0, CpuEnv::kWriter);                     // writer: out <- 5, committed
  CHECK(env->decode(s.interface).out == 5);
  CHECK(env->decode(s.interface).committed == 1);
  auto adm_after = env->admissible_successors(s.interface);
  CHECK(adm_after.back() == kStop);
  auto out = drive(0, kStop);
  CHECK(out.terminated);
  CHECK(out.reward == doctest::Approx(1.0 - spec.step_cost));
  CHECK(undiscounted == doctest::Approx(1.0 - 7 * spec.step_cost));
}

TEST_CASE("cpu pass-through shortcut when the target equals an operand") {
  CpuSpec spec;
  auto env = build_cpu(spec);
  Rng rng(0);
  JointState s = env->reset_to(4, 1, 4);
  double undiscounted = 0.0;
  auto drive = [&](int local, AgentId successor) {
    auto out = env->step(s, JointAction{local, successor}, rng);
    undiscounted += out.reward;
    s = out.next;
    return out;
  };
  drive(0, CpuEnv::kLoaderA);               // starter
  drive(0, CpuEnv::kSelector);              // loader-A: rx <- 4
  drive(0, CpuEnv::kWriter);                // selector: latch X
  drive(0, CpuEnv::kWriter);                // writer: out <- 4, committed
  auto out = drive(0, kStop);
  CHECK(out.terminated);
  CHECK(undiscounted == doctest::Approx(1.0 - 5 * spec.step_cost));
}

TEST_CASE("cpu achievable outputs match brute-force machine enumeration") {
  CpuSpec spec;
  spec.value_range = 10;
  auto env = build_cpu(spec);
  Rng rng(0);
  for (int a = 0; a < 10; ++a) {
    for (int b = 0; b < 10; ++b) {
      // Breadth-first closure over machine states under every (agent, local)
      // edge; committed output cells are the reachable program results.
      const JointState start = env->reset_to(a, b, 0);
      std::set<int> seen{start.interface};
      std::queue<int> frontier;
      frontier.push(start.interface);
      std::set<int> outputs;
      while (!frontier.empty()) {
        const int m = frontier.front();
        frontier.pop();
        const auto mc = env->decode(m);
        if (mc.committed && mc.out != spec.value_range) outputs.insert(mc.out);
        for (int agent = 0; agent < CpuEnv::kNumRoles; ++agent) {
          for (int local = 0; local < env->n_local_actions(agent); ++local) {
            JointState st;
            st.interface = m;
            st.privates.assign(CpuEnv::kNumRoles, 0);
            st.active = agent;
            st.step = 0;
            const auto out = env->step(
                st, JointAction{local, (agent + 1) % CpuEnv::kNumRoles}, rng);
            if (seen.insert(out.next.interface).second)
              frontier.push(out.next.interface);
          }
        }
      }
      const auto claim = CpuEnv::achievable_outputs(a, b, 10);
      const std::vector<int> found(outputs.begin(), outputs.end());
      CAPTURE(a);
      CAPTURE(b);
      CHECK(found == claim);
    }
  }
}

TEST_CASE("cpu operand modes and target achievability") {
  Rng rng(77);
  CpuSpec spec;
  spec.value_range = 10;
  spec.train_fraction = 0.2;
  CHECK(spec.train_values() == 2);

  auto train_env = build_cpu(spec);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = train_env->reset(rng);
    const auto mc = train_env->decode(s.interface);
    CHECK(mc.mem_a < 2);
    CHECK(mc.mem_b < 2);
    const auto pool = CpuEnv::achievable_outputs(mc.mem_a, mc.mem_b, 10);
    CHECK(std::count(pool.begin(), pool.end(), mc.target) == 1);
  }

  spec.operand_mode = CpuSpec::OperandMode::kHoldout;
  auto holdout_env = build_cpu(spec);
  for (int trial = 0; trial < 300; ++trial) {
    const auto mc = holdout_env->decode(holdout_env->reset(rng).interface);
    CHECK((mc.mem_a >= 2 || mc.mem_b >= 2));
  }

  spec.operand_mode = CpuSpec::OperandMode::kFull;
  auto full_env = build_cpu(spec);
  bool saw_high = false;
  for (int trial = 0; trial < 300; ++trial) {
    const auto mc = full_env->decode(full_env->reset(rng).interface);
    saw_high = saw_high || mc.mem_a >= 2 || mc.mem_b >= 2;
  }
  CHECK(saw_high);

  spec.fixed_target = 12;
  CHECK_THROWS_AS(build_cpu(spec), std::invalid_argument);
}

TEST_CASE("cpu relational observations never expose raw values") {
  CpuSpec spec;
  auto env = build_cpu(spec);
  const auto maps = env->default_observation_maps();
  Rng rng(0);

  JointState s = env->reset_to(2, 3, 5);
  CHECK(maps[CpuEnv::kStarter](s.interface, 0) == 0);      // init low
  CHECK(maps[CpuEnv::kLoaderA](s.interface, 0) == 0);      // rx empty
  CHECK(maps[CpuEnv::kAlu](s.interface, 0) == 4);          // registers unloaded

  s = env->step(s, {0, CpuEnv::kLoaderA}, rng).next;       // starter
  CHECK(maps[CpuEnv::kStarter](s.interface, 0) == 1);
  s = env->step(s, {0, CpuEnv::kLoaderB}, rng).next;       // rx <- 2
  CHECK(maps[CpuEnv::kLoaderA](s.interface, 0) == 1);
  s = env->step(s, {0, CpuEnv::kAlu}, rng).next;           // ry <- 3
  CHECK(maps[CpuEnv::kAlu](s.interface, 0) == 0);          // add hits 5

  // The same relational class appears for completely different raw values.
  JointState t = env->reset_to(7, 2, 9);
  Rng r2(0);
  t = env->step(t, {0, CpuEnv::kLoaderA}, r2).next;
  t = env->step(t, {0, CpuEnv::kLoaderB}, r2).next;
  t = env->step(t, {0, CpuEnv::kAlu}, r2).next;
  CHECK(maps[CpuEnv::kAlu](t.interface, 0) == 0);          // 7+2 hits 9 too

  // Selector sees which register holds the target, writer sees the latch.
  t = env->step(t, {CpuEnv::kAdd, CpuEnv::kSelector}, r2).next;
  CHECK(maps[CpuEnv::kSelector](t.interface, 0) == 0);     // rr == target
  t = env->step(t, {2, CpuEnv::kWriter}, r2).next;         // latch R
  CHECK(maps[CpuEnv::kWriter](t.interface, 0) == 1);       // match, not committed
  t = env->step(t, {0, CpuEnv::kWriter}, r2).next;         // commit
  CHECK(maps[CpuEnv::kWriter](t.interface, 0) == 3);       // committed + match
}

TEST_CASE("cpu private states record the last local action and are preserved") {
  CpuSpec spec;
  auto env = build_cpu(spec);
  Rng rng(0);
  JointState s = env->reset_to(1, 1, 2);
  auto out = env->step(s, JointAction{0, CpuEnv::kAlu}, rng);
  CHECK(out.next.privates[CpuEnv::kStarter] == 1);
  auto out2 = env->step(out.next, JointAction{CpuEnv::kMax, CpuEnv::kWriter}, rng);
  CHECK(out2.next.privates[CpuEnv::kAlu] == CpuEnv::kMax + 1);
  CHECK(out2.next.privates[CpuEnv::kStarter] == 1);  // untouched while inactive
}

TEST_CASE("cpu tabular learner generalizes to held-out operands") {
  CpuSpec spec;  // full-scale defaults: range 10, train fraction 0.2 -> {0, 1}
  spec.seed = 12;
  auto train_env = build_cpu(spec);

  LearnerConfig cfg;
  cfg.backend = LearnerConfig::Backend::kTabular;
  cfg.adaptable = true;
  cfg.schedule = LearnerConfig::StepSchedule::kDefault;
  cfg.eta0 = 0.5;  // effective tabular rate is 2*eta, so 0.5 is the ceiling
  cfg.k0 = 300;    // fast decay: freezes a good policy before aliasing churn
  cfg.eps0 = 1.0;
  cfg.eps_floor = 0.05;
  cfg.budget_epochs = 400000;
  cfg.q_init = 0.0;
  cfg.seed = 1;
  IcqTrainer trainer(*train_env, train_env->default_observation_maps(), cfg);
  Rng train_rng(10);
  trainer.train(train_rng);

  // Held-out evaluation: at least one operand outside the training range.
  CpuSpec eval_spec = spec;
  eval_spec.operand_mode = CpuSpec::OperandMode::kHoldout;
  auto eval_env = build_cpu(eval_spec);
  IcqTrainer evaluator(*eval_env, eval_env->default_observation_maps(), cfg);
  evaluator.restore(trainer.checkpoint());

  int successes = 0;
  const int n_eval = 400;
  for (int ep = 0; ep < n_eval; ++ep) {
    Rng ep_rng = Rng::substream(4242, "cpu-holdout", ep);
    const auto res = evaluator.run_episode(ep_rng, /*learn=*/false, /*eps=*/0.0);
    if (res.undiscounted_return > 0.5) ++successes;
  }
  const double accuracy = static_cast<double>(successes) / n_eval;
  CAPTURE(accuracy);
  CHECK(accuracy >= 0.7);
}
