#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "einopt/graph.hpp"
#include "einopt/tensor.hpp"

using namespace einopt;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(EINOPT_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf;
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/einopt_cli_" + name;
  std::ofstream f(path, std::ios::binary);
  f << content;
  return path;
}

std::string sample_graph_text() {
  NodePtr A = variable("cliA", {3, 3});
  NodePtr B = variable("cliB", {3, 3});
  NodePtr C = variable("cliC", {3, 3});
  NodePtr g = make_einsum("ij,jk->ik", {make_einsum("ij,jk->ik", {add(A, B), C}), C});
  return serialize(Graph({g}));
}

}  // namespace

TEST_CASE("cli optimize is deterministic and reports passes") {
  std::string in = write_temp("opt.graph", sample_graph_text());
  CmdResult r1 = run_cli("optimize " + in + " --count-flops");
  CmdResult r2 = run_cli("optimize " + in + " --count-flops");
  CHECK(r1.exit_code == 0);
  CHECK(r1.output == r2.output);
  CHECK(r1.output.find("report") != std::string::npos);
  CHECK(r1.output.find("flops_after") != std::string::npos);
}

TEST_CASE("cli derive produces a loadable gradient graph") {
  NodePtr x = variable("clix", {4});
  NodePtr A = variable("cliM", {4, 4});
  NodePtr f = make_einsum("i,ij,j->", {x, A, x});
  std::string in = write_temp("derive.graph", serialize(Graph({f})));
  std::string out = "/tmp/einopt_cli_grad.graph";
  CmdResult r = run_cli("derive " + in + " --mode grad --wrt clix --out " + out);
  CHECK(r.exit_code == 0);
  std::ifstream g(out);
  std::stringstream ss;
  ss << g.rdbuf();
  Graph back = deserialize(ss.str());
  CHECK(back.sinks.size() == 1);
  CHECK(back.sinks[0]->shape == Shape{4});
}

TEST_CASE("cli run with seeded variables is byte identical across runs") {
  std::string in = write_temp("run.graph", sample_graph_text());
  CmdResult r1 = run_cli("run " + in + " --seed 7 --count-flops");
  CmdResult r2 = run_cli("run " + in + " --seed 7 --count-flops");
  CHECK(r1.exit_code == 0);
  CHECK(r1.output == r2.output);
  CmdResult r3 = run_cli("run " + in + " --seed 8");
  CHECK(r3.output != r1.output);
}

TEST_CASE("cli run accepts feeds from tensor files") {
  NodePtr x = variable("feedx", {3});
  std::string in = write_temp("feed.graph", serialize(Graph({make_einsum("i,i->", {x, x})})));
  DenseTensor t({3}, {1.0, 2.0, 3.0});
  write_tensor_file("/tmp/einopt_cli_x.bin", t);
  CmdResult r = run_cli("run " + in + " --feed feedx=/tmp/einopt_cli_x.bin");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("14") != std::string::npos);
}

TEST_CASE("cli dot is deterministic") {
  std::string in = write_temp("dot.graph", sample_graph_text());
  CmdResult r1 = run_cli("dot " + in);
  CmdResult r2 = run_cli("dot " + in);
  CHECK(r1.exit_code == 0);
  CHECK(r1.output == r2.output);
  CHECK(r1.output.find("digraph") != std::string::npos);
}

TEST_CASE("cli bench is deterministic under a fixed seed") {
  CmdResult r1 = run_cli("bench cpd-als --order 3 --size 4 --rank 2 --iters 3 --seed 11");
  CmdResult r2 = run_cli("bench cpd-als --order 3 --size 4 --rank 2 --iters 3 --seed 11");
  CHECK(r1.exit_code == 0);
  CHECK(r1.output == r2.output);
}

TEST_CASE("cli exit codes distinguish usage, validation and numerical errors") {
  CHECK(run_cli("nonsense").exit_code == 1);
  CHECK(run_cli("optimize").exit_code == 1);  // missing required argument
  std::string bad = write_temp("bad.graph", "this is not a graph");
  CHECK(run_cli("optimize " + bad).exit_code == 2);

  // singular inverse surfaces as a numerical failure
  NodePtr A = variable("cliS", {2, 2});
  std::string sing = write_temp("sing.graph", serialize(Graph({tensor_inverse(A)})));
  DenseTensor z({2, 2});
  write_tensor_file("/tmp/einopt_cli_zero.bin", z);
  CmdResult r = run_cli("run " + sing + " --feed cliS=/tmp/einopt_cli_zero.bin");
  CHECK(r.exit_code == 3);
}
