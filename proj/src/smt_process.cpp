// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0
//
// External SMT backend: runs one solver subprocess per query, speaking
// SMT-LIB 2 over stdin/stdout. The command is taken from the options or the
// SPECTEST_SMT_SOLVER environment variable (e.g. "z3 -in").

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <sstream>

#include "spectest/solver.hpp"

namespace spectest::solve {

using namespace sym;

namespace {

struct Subprocess {
  pid_t pid = -1;
  int in_fd = -1;   // write to child stdin
  int out_fd = -1;  // read from child stdout
  ~Subprocess() {
    if (in_fd >= 0) close(in_fd);
    if (out_fd >= 0) close(out_fd);
    if (pid > 0) {
      kill(pid, SIGKILL);
      waitpid(pid, nullptr, 0);
    }
  }
};

std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> out;
  std::istringstream is(cmd);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

bool spawn(const std::string& command, Subprocess& sp) {
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0) return false;
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    return false;
  }
  pid_t pid = fork();
  if (pid < 0) return false;
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    auto args = split_command(command);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  sp.pid = pid;
  sp.in_fd = to_child[1];
  sp.out_fd = from_child[0];
  return true;
}

bool write_all(int fd, const std::string& s) {
  size_t off = 0;
  while (off < s.size()) {
    ssize_t n = write(fd, s.data() + off, s.size() - off);
    if (n <= 0) return false;
    off += static_cast<size_t>(n);
  }
  return true;
}

// Reads until the child closes stdout or the deadline passes.
bool read_until_eof(int fd, std::string& out, std::chrono::steady_clock::time_point deadline) {
  char buf[4096];
  while (true) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return false;
    int ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
    struct pollfd pfd{fd, POLLIN, 0};
    int pr = poll(&pfd, 1, std::max(1, ms));
    if (pr < 0) return false;
    if (pr == 0) return false;  // timed out
    ssize_t n = read(fd, buf, sizeof buf);
    if (n < 0) return false;
    if (n == 0) return true;  // eof
    out.append(buf, static_cast<size_t>(n));
  }
}

// --- tiny s-expression reader for (get-value ...) replies -------------------

struct SExpr {
  std::string atom;
  std::vector<SExpr> items;
  bool is_atom() const { return items.empty() && !atom.empty(); }
};

size_t parse_sexpr(const std::string& s, size_t i, SExpr& out) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  if (i >= s.size()) return i;
  if (s[i] == '(') {
    ++i;
    while (true) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      if (i >= s.size()) return i;
      if (s[i] == ')') return i + 1;
      SExpr child;
      i = parse_sexpr(s, i, child);
      out.items.push_back(std::move(child));
    }
  }
  size_t j = i;
  while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' && s[j] != ')')
    ++j;
  out.atom = s.substr(i, j - i);
  return j;
}

std::optional<word_t> parse_bv_value(const SExpr& e) {
  if (e.is_atom()) {
    const std::string& a = e.atom;
    if (a.rfind("#x", 0) == 0) return static_cast<word_t>(std::stoull(a.substr(2), nullptr, 16));
    if (a.rfind("#b", 0) == 0) return static_cast<word_t>(std::stoull(a.substr(2), nullptr, 2));
    return std::nullopt;
  }
  // (_ bvNNN 32)
  if (e.items.size() == 3 && e.items[0].atom == "_" && e.items[1].atom.rfind("bv", 0) == 0)
    return static_cast<word_t>(std::stoull(e.items[1].atom.substr(2)));
  return std::nullopt;
}

}  // namespace

SmtProcessSolver::SmtProcessSolver(SmtProcessOptions opts) : opts_(std::move(opts)) {
  if (opts_.command.empty()) {
    const char* env = std::getenv("SPECTEST_SMT_SOLVER");
    if (env) opts_.command = env;
  }
}

SolveOutcome SmtProcessSolver::solve(const ExprPtr& formula) {
  if (opts_.command.empty())
    return {SatResult::Unknown, {}, "no external solver configured (set SPECTEST_SMT_SOLVER)"};

  std::ostringstream query;
  query << emit_smtlib_query(formula, opts_.domain_bits);

  SymbolSet syms = collect_symbols(formula);
  std::vector<ExprPtr> selects;
  collect_selects(formula, selects);

  // Register values first; cell values are requested for every select term,
  // with symbolic indices evaluated client-side from the register model.
  if (!syms.regs.empty()) {
    query << "(get-value (";
    for (const auto& [copy, reg] : syms.regs) query << "a" << reg << (copy ? "_p" : "") << " ";
    query << "))\n";
  }
  query << "(exit)\n";

  Subprocess sp;
  if (!spawn(opts_.command, sp))
    return {SatResult::Unknown, {}, "failed to spawn external solver"};
  if (!write_all(sp.in_fd, query.str()))
    return {SatResult::Unknown, {}, "failed to write query to external solver"};
  close(sp.in_fd);
  sp.in_fd = -1;

  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(opts_.timeout_ms);
  std::string reply;
  if (!read_until_eof(sp.out_fd, reply, deadline))
    return {SatResult::Unknown, {}, "external solver timeout"};

  std::istringstream rs(reply);
  std::string verdict;
  rs >> verdict;
  if (verdict == "unsat") return {SatResult::Unsat, {}, ""};
  if (verdict != "sat") return {SatResult::Unknown, {}, "solver replied: " + verdict};

  Model model;
  size_t pos = reply.find('\n');
  if (pos != std::string::npos && !syms.regs.empty()) {
    SExpr values;
    parse_sexpr(reply, pos, values);
    for (const auto& binding : values.items) {
      if (binding.items.size() != 2 || !binding.items[0].is_atom()) continue;
      std::string name = binding.items[0].atom;
      auto v = parse_bv_value(binding.items[1]);
      if (!v) continue;
      int copy = 0;
      if (name.size() > 2 && name.substr(name.size() - 2) == "_p") {
        copy = 1;
        name = name.substr(0, name.size() - 2);
      }
      if (name.size() > 1 && name[0] == 'a')
        model.regs[{copy, static_cast<unsigned>(std::stoul(name.substr(1)))}] = *v;
    }
  }

  // Second pass: concrete cell addresses under the register model.
  if (!selects.empty()) {
    Valuation v = model.to_valuation();
    v.strict_cells = false;
    std::ostringstream q2;
    {
      // Re-assert the first call's register model so the fresh process
      // reports cell values consistent with it.
      std::string base = emit_smtlib_query(formula, opts_.domain_bits);
      size_t cs = base.rfind("(check-sat)");
      std::ostringstream pins;
      for (const auto& [key, val] : model.regs) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "#x%08x", val);
        pins << "(assert (= a" << key.second << (key.first ? "_p" : "") << " " << buf << "))\n";
      }
      base.insert(cs, pins.str());
      q2 << base;
    }
    q2 << "(get-value (";
    std::vector<std::pair<int, word_t>> keys;
    for (const auto& sel : selects) {
      // Walk to the root array to find the copy; evaluate the index.
      const Node* m = sel->a.get();
      while (m->op == Op::Store) m = m->a.get();
      word_t addr = eval(sel->b, v);
      keys.push_back({m->copy, addr});
      char buf[16];
      std::snprintf(buf, sizeof buf, "#x%08x", addr);
      q2 << "(select " << (m->copy ? "mem_p" : "mem") << " " << buf << ") ";
    }
    q2 << "))\n(exit)\n";

    Subprocess sp2;
    if (!spawn(opts_.command, sp2))
      return {SatResult::Unknown, {}, "failed to spawn external solver"};
    if (!write_all(sp2.in_fd, q2.str()))
      return {SatResult::Unknown, {}, "failed to write query to external solver"};
    close(sp2.in_fd);
    sp2.in_fd = -1;
    std::string reply2;
    if (!read_until_eof(sp2.out_fd, reply2, deadline))
      return {SatResult::Unknown, {}, "external solver timeout"};
    size_t p2 = reply2.find('\n');
    if (p2 != std::string::npos) {
      SExpr values;
      parse_sexpr(reply2, p2, values);
      for (size_t i = 0; i < values.items.size() && i < keys.size(); ++i) {
        if (values.items[i].items.size() != 2) continue;
        auto val = parse_bv_value(values.items[i].items[1]);
        if (val) model.cells[keys[i]] = *val;
      }
    }
  }
  return {SatResult::Sat, std::move(model), ""};
}

}  // namespace spectest::solve
