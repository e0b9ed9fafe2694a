#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "einopt/autodiff.hpp"
#include "einopt/executor.hpp"
#include "einopt/graph.hpp"
#include "einopt/methods.hpp"
#include "einopt/optimizer.hpp"

namespace {

using namespace einopt;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GraphError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GraphError("cannot write file: " + path);
  out << content;
}

std::string fmt(double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

NodePtr find_variable(const Graph& g, const std::string& name) {
  for (auto& [uid, n] : g.store)
    if (n->kind == NodeKind::Variable && n->name == name) return n;
  throw GraphError("no variable named '" + name + "' in graph");
}

void emit_graph(const Graph& g, const std::string& out_path) {
  std::string text = serialize(g);
  if (out_path.empty()) std::cout << text << "\n";
  else write_file(out_path, text);
}

// ---- subcommand bodies ----

struct OptimizeArgs {
  std::string input, out;
  std::vector<std::string> dump_after;
  bool count_flops = false;
};

int cmd_optimize(const OptimizeArgs& a) {
  Graph g = deserialize(read_file(a.input));
  PassReport report;
  OptimizeOptions opts;
  if (!a.dump_after.empty()) {
    opts.dump_passes = a.dump_after;
    opts.dump_dir = a.out.empty()
                        ? "."
                        : std::filesystem::path(a.out).parent_path().string();
    if (opts.dump_dir.empty()) opts.dump_dir = ".";
  }
  Graph opt = optimize(g, &report, opts);
  emit_graph(opt, a.out);
  std::cout << "report " << report.to_json() << "\n";
  if (a.count_flops)
    std::cout << "flops_before " << report.flops_before() << "\nflops_after "
              << report.flops_after() << "\n";
  return 0;
}

struct DeriveArgs {
  std::string input, out, mode;
  std::vector<std::string> wrt;
  bool optimize_result = false;
};

int cmd_derive(const DeriveArgs& a) {
  Graph g = deserialize(read_file(a.input));
  if (g.sinks.empty()) throw GraphError("input graph has no sinks");
  NodePtr output = g.sinks[0];
  std::vector<NodePtr> wrt;
  for (auto& name : a.wrt) wrt.push_back(find_variable(g, name));
  if (wrt.empty()) throw GraphError("derive requires at least one --wrt variable");

  std::vector<NodePtr> sinks;
  if (a.mode == "grad") {
    sinks = gradients(output, wrt);
  } else if (a.mode == "jacobian") {
    sinks = jacobian(output, wrt);
  } else if (a.mode == "hessian") {
    for (auto& row : hessian(output, wrt))
      sinks.insert(sinks.end(), row.begin(), row.end());
  } else if (a.mode == "vjp") {
    NodePtr v = variable("v", output->shape);
    for (auto& w : wrt) sinks.push_back(vjp(v, output, w));
  } else if (a.mode == "jvp") {
    for (auto& w : wrt) {
      NodePtr v = variable("v_" + w->name, w->shape);
      sinks.push_back(jvp(v, output, w));
    }
  } else if (a.mode == "hvp") {
    for (auto& w : wrt) {
      NodePtr v = variable("v_" + w->name, w->shape);
      sinks.push_back(hvp(output, w, v));
    }
  } else {
    throw CLI::ValidationError("--mode", "unknown mode '" + a.mode + "'");
  }
  Graph result(std::move(sinks));
  if (a.optimize_result) result = optimize(result);
  emit_graph(result, a.out);
  return 0;
}

struct RunArgs {
  std::string input, out;
  std::vector<std::string> feeds;
  uint64_t seed = 0;
  bool seed_missing = false;
  bool count_flops = false;
};

int cmd_run(const RunArgs& a) {
  Graph g = deserialize(read_file(a.input));
  FeedDict feed;
  for (auto& spec : a.feeds) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--feed", "expected name=tensorfile");
    feed[spec.substr(0, eq)] = read_tensor_file(spec.substr(eq + 1));
  }
  if (a.seed_missing) {
    // any unfed variable gets deterministic uniform(-1,1) entries
    CounterRng rng(a.seed);
    for (auto& n : topo_order(g.sinks)) {
      if (n->kind == NodeKind::Variable && !feed.count(n->name))
        feed[n->name] = rng.tensor(n->shape);
    }
  }
  Executor exec(g.sinks);
  auto results = exec.run(feed);
  for (size_t i = 0; i < results.size(); ++i) {
    std::cout << "out" << i << " " << tensor_to_text(results[i]) << "\n";
    if (!a.out.empty()) {
      std::string path = results.size() == 1 ? a.out : a.out + "." + std::to_string(i);
      write_tensor_file(path, results[i]);
    }
  }
  if (a.count_flops) std::cout << "flops " << flop_estimate(g) << "\n";
  return 0;
}

struct BenchArgs {
  int64_t order = 3, size = 6, rank = 4, iters = 25, sites = 4, phys = 2;
  uint64_t seed = 7;
  double tol = 0.0;
  bool no_dimension_tree = false;
};

int bench_cpd_als(const BenchArgs& a) {
  CpdProblem p = cpd_graph(Shape(static_cast<size_t>(a.order), a.size), a.rank);
  CpdAlsSweep tree = build_cpd_als(p, true);
  CpdAlsSweep flat = build_cpd_als(p, false);
  const CpdAlsSweep& sweep = a.no_dimension_tree ? flat : tree;

  std::cout << "flops_with_tree " << flop_estimate(tree.sweep_graph) << "\n";
  std::cout << "flops_without_tree " << flop_estimate(flat.sweep_graph) << "\n";
  std::cout << "input_contractions_per_sweep "
            << count_einsums_touching(Graph(tree.new_factors), p.input) << "\n";

  CounterRng rng(a.seed);
  std::vector<DenseTensor> truth, factors;
  for (auto& f : p.factors) truth.push_back(rng.tensor(f->shape));
  DenseTensor x = evaluate(p.reconstruction, [&] {
    FeedDict fd;
    for (size_t i = 0; i < truth.size(); ++i) fd[p.factors[i]->name] = truth[i];
    return fd;
  }());
  for (auto& t : truth) {
    DenseTensor init = t;
    DenseTensor noise = rng.tensor(t.shape());
    for (int64_t i = 0; i < init.size(); ++i) init[i] += 0.1 * noise[i];
    factors.push_back(std::move(init));
  }

  Executor exec(sweep.sweep_graph.sinks);
  std::cout << "sweep loss\n";
  for (int64_t it = 0; it < a.iters; ++it) {
    double loss = cpd_als_sweep(sweep, exec, x, factors);
    std::cout << it << " " << fmt(loss) << "\n";
    if (a.tol > 0.0 && loss < a.tol) break;
  }
  return 0;
}

int bench_cpd_gn(const BenchArgs& a) {
  CpdProblem p = cpd_graph(Shape(static_cast<size_t>(a.order), a.size), a.rank);
  GnState st = build_cpd_gauss_newton(p);
  CounterRng rng(a.seed);
  std::vector<DenseTensor> truth, factors;
  for (auto& f : p.factors) truth.push_back(rng.tensor(f->shape));
  FeedDict fd;
  for (size_t i = 0; i < truth.size(); ++i) fd[p.factors[i]->name] = truth[i];
  DenseTensor x = evaluate(p.reconstruction, fd);
  for (auto& t : truth) {
    DenseTensor init = t;
    DenseTensor noise = rng.tensor(t.shape());
    for (int64_t i = 0; i < init.size(); ++i) init[i] += 0.1 * noise[i];
    factors.push_back(std::move(init));
  }
  Executor exec({});
  std::cout << "iter loss cg_iters\n";
  for (int64_t it = 0; it < a.iters; ++it) {
    GnStepResult r = cpd_gauss_newton_step(st, exec, x, factors);
    std::cout << it << " " << fmt(r.loss_after) << " " << r.cg_iters << "\n";
    if (a.tol > 0.0 && r.loss_after < a.tol) break;
  }
  return 0;
}

int bench_tucker(const BenchArgs& a) {
  Shape extents(static_cast<size_t>(a.order), a.size);
  Shape ranks(static_cast<size_t>(a.order), a.rank);
  TuckerProblem p = tucker_graph(extents, ranks);
  TuckerSweep tree = build_tucker_sweep(p, true);
  TuckerSweep flat = build_tucker_sweep(p, false);
  const TuckerSweep& sweep = a.no_dimension_tree ? flat : tree;
  std::cout << "flops_with_tree " << flop_estimate(tree.sweep_graph) << "\n";
  std::cout << "flops_without_tree " << flop_estimate(flat.sweep_graph) << "\n";

  CounterRng rng(a.seed);
  // exactly representable input: random core expanded through random factors
  FeedDict fd;
  std::vector<DenseTensor> factors;
  for (auto& f : p.factors) {
    factors.push_back(rng.tensor(f->shape));
    fd[f->name] = factors.back();
  }
  DenseTensor core = rng.tensor(ranks);
  NodePtr gvar = variable("__core", ranks);
  EinsumSpec rs;
  std::vector<NodePtr> ins = {gvar};
  int64_t n = a.order;
  std::vector<AxisLabel> g_axes;
  for (int64_t i = 0; i < n; ++i) g_axes.push_back(static_cast<AxisLabel>(n + i));
  rs.operands.push_back(g_axes);
  for (int64_t i = 0; i < n; ++i) {
    rs.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(n + i)});
    rs.output.push_back(static_cast<AxisLabel>(i));
    ins.push_back(p.factors[static_cast<size_t>(i)]);
  }
  fd["__core"] = core;
  DenseTensor x = evaluate(make_einsum(std::move(rs), std::move(ins)), fd);

  Executor exec(sweep.sweep_graph.sinks);
  std::cout << "sweep loss\n";
  for (int64_t it = 0; it < a.iters; ++it) {
    double loss = tucker_ttmc_sweep(sweep, exec, x, factors);
    std::cout << it << " " << fmt(loss) << "\n";
    if (a.tol > 0.0 && loss < a.tol) break;
  }
  return 0;
}

int bench_dmrg(const BenchArgs& a) {
  DmrgProblem p = dmrg_graph(a.sites, a.phys, a.rank);
  DmrgSweepState st = build_dmrg_sweep(p);
  CounterRng rng(a.seed);
  std::vector<DenseTensor> mpo, mps;
  for (auto& w : p.mpo) {
    DenseTensor t = rng.tensor(w->shape);
    // symmetrize the physical pair so the operator is symmetric
    const Shape& s = t.shape();
    DenseTensor sym(s);
    for (int64_t i = 0; i < s[0]; ++i)
      for (int64_t x = 0; x < s[1]; ++x)
        for (int64_t y = 0; y < s[2]; ++y)
          for (int64_t j = 0; j < s[3]; ++j)
            sym.at({i, x, y, j}) = 0.5 * (t.at({i, x, y, j}) + t.at({i, y, x, j}));
    mpo.push_back(std::move(sym));
  }
  for (auto& m : p.mps) mps.push_back(rng.tensor(m->shape));
  Executor exec(st.sweep_graph.sinks);
  std::cout << "sweep eigenvalue\n";
  double prev = 0.0;
  for (int64_t it = 0; it < a.iters; ++it) {
    DmrgSweepResult r = dmrg_sweep(st, exec, mpo, mps);
    std::cout << it << " " << fmt(r.eigenvalue) << "\n";
    if (it > 0 && a.tol > 0.0 && std::abs(r.eigenvalue - prev) < a.tol) break;
    prev = r.eigenvalue;
  }
  return 0;
}

struct DotArgs {
  std::string input, out;
};

int cmd_dot(const DotArgs& a) {
  Graph g = deserialize(read_file(a.input));
  std::string text = to_dot(g);
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"einsum graph compiler: optimize, differentiate, and run tensor graphs"};
  app.require_subcommand(1);

  OptimizeArgs oa;
  auto* opt = app.add_subcommand("optimize", "optimize a graph file");
  opt->add_option("input", oa.input, "graph file")->required();
  opt->add_option("--out", oa.out, "output graph file (default: stdout)");
  opt->add_option("--dump-after", oa.dump_after, "dump DOT after the named pass");
  opt->add_flag("--count-flops", oa.count_flops, "print flop estimates");

  DeriveArgs da;
  auto* der = app.add_subcommand("derive", "build derivative graphs");
  der->add_option("input", da.input, "graph file")->required();
  der->add_option("--mode", da.mode, "grad|jacobian|hessian|hvp|jvp|vjp")->required();
  der->add_option("--wrt", da.wrt, "variable names")->required();
  der->add_option("--out", da.out, "output graph file (default: stdout)");
  der->add_flag("--optimize", da.optimize_result, "optimize the derivative graph");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "evaluate a graph");
  run->add_option("input", ra.input, "graph file")->required();
  run->add_option("--feed", ra.feeds, "name=tensorfile (binary format)");
  auto* seed_opt =
      run->add_option("--seed", ra.seed, "seed deterministic values for unfed variables");
  run->add_option("--out", ra.out, "write outputs as binary tensor files");
  run->add_flag("--count-flops", ra.count_flops, "print the graph's flop estimate");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "run a tensor-method driver");
  std::string method;
  bench->add_option("method", method, "cpd-als|cpd-gn|tucker|dmrg")->required();
  bench->add_option("--order", ba.order, "tensor order (cpd/tucker)");
  bench->add_option("--size", ba.size, "mode extent (cpd/tucker)");
  bench->add_option("--rank", ba.rank, "decomposition / MPO rank");
  bench->add_option("--iters", ba.iters, "sweeps or iterations");
  bench->add_option("--sites", ba.sites, "site count (dmrg)");
  bench->add_option("--phys", ba.phys, "physical extent (dmrg)");
  bench->add_option("--seed", ba.seed, "RNG seed");
  bench->add_option("--tol", ba.tol, "early-stop tolerance");
  bench->add_flag("--no-dimension-tree", ba.no_dimension_tree,
                  "disable constrained-path sharing");

  DotArgs dta;
  auto* dot = app.add_subcommand("dot", "export a graph as DOT");
  dot->add_option("input", dta.input, "graph file")->required();
  dot->add_option("--out", dta.out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*opt) return cmd_optimize(oa);
    if (*der) return cmd_derive(da);
    if (*run) {
      ra.seed_missing = seed_opt->count() > 0;
      return cmd_run(ra);
    }
    if (*bench) {
      if (method == "cpd-als") return bench_cpd_als(ba);
      if (method == "cpd-gn") return bench_cpd_gn(ba);
      if (method == "tucker") return bench_tucker(ba);
      if (method == "dmrg") return bench_dmrg(ba);
      std::cerr << "unknown bench method '" << method << "'\n";
      return 1;
    }
    if (*dot) return cmd_dot(dta);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const einopt::ExecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const einopt::GraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
