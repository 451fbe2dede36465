#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ccq/model.hpp"

namespace ccq {

void save_scenarios(const ScenarioSet& S, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scenarios: cannot open " + path);
  for (int j = 0; j < S.s(); ++j) out << (j ? "," : "") << "xi_" << (j + 1);
  out << "\n";
  char buf[64];
  for (int i = 0; i < S.N(); ++i) {
    for (int j = 0; j < S.s(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", S.data(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_scenarios: write failed for " + path);
}

ScenarioSet load_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scenarios: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_scenarios: empty file");

  int s = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      const std::string want = "xi_" + std::to_string(s + 1);
      if (cell != want)
        throw std::runtime_error("load_scenarios: bad header cell '" + cell +
                                 "', expected '" + want + "'");
      ++s;
    }
  }
  if (s == 0) throw std::runtime_error("load_scenarios: header has no columns");

  std::vector<double> values;
  int N = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      size_t used = 0;
      double v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("load_scenarios: non-numeric cell at line " +
                                 std::to_string(lineno));
      }
      if (used != cell.size())
        throw std::runtime_error("load_scenarios: non-numeric cell at line " +
                                 std::to_string(lineno));
      values.push_back(v);
      ++cols;
    }
    if (cols != s)
      throw std::runtime_error("load_scenarios: line " + std::to_string(lineno) +
                               " has " + std::to_string(cols) + " cells, header declares " +
                               std::to_string(s));
    ++N;
  }
  if (N == 0) throw std::runtime_error("load_scenarios: empty scenario set");

  ScenarioSet out;
  out.data.resize(N, s);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < s; ++j) out.data(i, j) = values[i * s + j];
  out.generator_id = "file:" + path;
  return out;
}

}  // namespace ccq
