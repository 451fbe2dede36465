#pragma once

#include <map>
#include <string>

namespace ccq {

// Sectioned key=value instance description files:
//   [problem]          # sections: problem, generator, solver, tuner
//   name = knapsack    # keys are lowercase snake-case
//   alpha = 0.05       # '#' starts a comment
class Config {
public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);

private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace ccq
