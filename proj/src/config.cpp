#include "couplab/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace couplab::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_ws(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

bool to_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool to_long(const std::string& s, long long* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool to_u64(const std::string& s, std::uint64_t* out) {
  if (s.empty() || s[0] == '-') return false;
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  std::string value;
  int line = 0;
};

// Grammar check shared by validation and the builders below. Returns an
// empty string when the text is well formed.
std::string check_profile(const std::string& text) {
  auto t = split_ws(text);
  if (t.empty()) return "profile: empty";
  if (t[0] == "intermittent") {
    if (t.size() != 1) return "profile: intermittent takes no arguments";
    return "";
  }
  if (t[0] == "analytic") {
    double c, rho;
    if (t.size() != 3 || !to_double(t[1], &c) || !to_double(t[2], &rho) ||
        c <= 0 || rho <= 0)
      return "profile: expected 'analytic <c> <rho>' with c, rho > 0";
    return "";
  }
  if (t[0] == "geometric") {
    double a;
    if (t.size() != 2 || !to_double(t[1], &a) || !(a > 0 && a < 1))
      return "profile: expected 'geometric <a>' with a in (0,1)";
    return "";
  }
  return "profile: unknown form '" + t[0] + "'";
}

std::string check_tail(const std::string& text) {
  auto t = split_ws(text);
  if (t.empty()) return "tail: empty";
  if (t[0] == "observable") {
    if (t.size() != 1) return "tail: observable takes no arguments";
    return "";
  }
  if (t[0] == "power") {
    double c, b;
    if (t.size() != 3 || !to_double(t[1], &c) || !to_double(t[2], &b) ||
        c <= 0 || b <= 0)
      return "tail: expected 'power <c> <b>' with c, b > 0";
    return "";
  }
  if (t[0] == "indicator") {
    double m;
    if (t.size() != 2 || !to_double(t[1], &m) || m <= 0)
      return "tail: expected 'indicator <m>' with m > 0";
    return "";
  }
  return "tail: unknown form '" + t[0] + "'";
}

}  // namespace

ConfigError::ConfigError(std::vector<Violation> v)
    : std::runtime_error([&v] {
        std::string msg = "invalid config";
        for (const auto& viol : v) {
          msg += "; ";
          if (viol.line > 0) msg += "line " + std::to_string(viol.line) + ": ";
          msg += viol.message;
        }
        return msg;
      }()),
      violations(std::move(v)) {}

observables::Observable parse_observable(const std::string& text) {
  auto t = split_ws(text);
  if (t.empty()) throw std::invalid_argument("observable: empty");
  observables::Observable f;
  observables::Piece piece;
  piece.lo = 0.0;
  piece.hi = 1.0;
  if (t[0] == "identity") {
    if (t.size() != 1)
      throw std::invalid_argument("observable: identity takes no arguments");
    return observables::identity_observable();
  }
  if (t[0] == "power") {
    double a;
    if (t.size() != 2 || !to_double(t[1], &a))
      throw std::invalid_argument("observable: expected 'power <a>'");
    piece.kind = observables::Piece::Kind::power;
    piece.a = a;
  } else if (t[0] == "affine") {
    double s, b;
    if (t.size() != 3 || !to_double(t[1], &s) || !to_double(t[2], &b))
      throw std::invalid_argument(
          "observable: expected 'affine <slope> <intercept>'");
    piece.kind = observables::Piece::Kind::affine;
    piece.slope = s;
    piece.intercept = b;
  } else if (t[0] == "indicator") {
    double lo, hi;
    if (t.size() != 3 || !to_double(t[1], &lo) || !to_double(t[2], &hi) ||
        !(0.0 <= lo && lo < hi && hi <= 1.0))
      throw std::invalid_argument(
          "observable: expected 'indicator <lo> <hi>' with 0 <= lo < hi <= 1");
    piece.kind = observables::Piece::Kind::indicator;
    piece.lo = lo;
    piece.hi = hi;
  } else {
    throw std::invalid_argument("observable: unknown form '" + t[0] + "'");
  }
  f.pieces.push_back(piece);
  return f;
}

quantmix::MixingProfile parse_profile(const std::string& text, double gamma) {
  std::string err = check_profile(text);
  if (!err.empty()) throw std::invalid_argument(err);
  auto t = split_ws(text);
  if (t[0] == "intermittent") return quantmix::intermittent_profile(gamma);
  if (t[0] == "analytic")
    return quantmix::analytic_profile(std::strtod(t[1].c_str(), nullptr),
                                      std::strtod(t[2].c_str(), nullptr));
  return quantmix::geometric_profile(std::strtod(t[1].c_str(), nullptr));
}

observables::TailFunction parse_tail_spec(const std::string& text) {
  std::string err = check_tail(text);
  if (!err.empty()) throw std::invalid_argument(err);
  auto t = split_ws(text);
  if (t[0] == "power")
    return observables::power_tail(std::strtod(t[1].c_str(), nullptr),
                                   std::strtod(t[2].c_str(), nullptr));
  if (t[0] == "indicator")
    return observables::indicator_tail(std::strtod(t[1].c_str(), nullptr));
  throw std::invalid_argument("tail: 'observable' needs a map model");
}

RunConfig parse_config_text(const std::string& text) {
  std::vector<Violation> errs;
  std::map<std::string, Entry> kv;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errs.push_back({lineno, "expected 'key = value'"});
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      errs.push_back({lineno, "expected 'key = value'"});
      continue;
    }
    if (kv.count(key)) {
      errs.push_back({lineno, "duplicate key '" + key + "'"});
      continue;
    }
    kv[key] = {value, lineno};
  }

  static const char* known[] = {"gamma",  "observable", "p",    "variant",
                                "epsilon", "L_max",     "M_cond", "reps",
                                "seed",   "bins",       "tol",  "out",
                                "profile", "tail"};
  for (const auto& [key, entry] : kv) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) errs.push_back({entry.line, "unknown key '" + key + "'"});
  }

  RunConfig cfg;
  auto line_of = [&kv](const char* key) {
    auto it = kv.find(key);
    return it == kv.end() ? 0 : it->second.line;
  };
  auto get_double = [&](const char* key, double* out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (!to_double(it->second.value, out))
      errs.push_back({it->second.line, std::string(key) + ": not a number"});
  };
  auto get_long = [&](const char* key, long long lo, long long hi,
                      long long* out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    long long v;
    if (!to_long(it->second.value, &v))
      errs.push_back({it->second.line, std::string(key) + ": not an integer"});
    else if (v < lo || v > hi)
      errs.push_back({it->second.line,
                      std::string(key) + " must lie in [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]"});
    else
      *out = v;
  };

  get_double("gamma", &cfg.gamma);
  get_double("p", &cfg.p);
  get_double("epsilon", &cfg.epsilon);
  get_double("tol", &cfg.tol);

  long long lv = cfg.L_max;
  get_long("L_max", 0, 24, &lv);
  cfg.L_max = static_cast<int>(lv);
  lv = cfg.M_cond;
  get_long("M_cond", 1000, 1000000, &lv);
  cfg.M_cond = static_cast<long>(lv);
  lv = cfg.reps;
  get_long("reps", 1, 1000000, &lv);
  cfg.reps = static_cast<long>(lv);
  lv = cfg.bins;
  get_long("bins", 1, 1 << 20, &lv);
  cfg.bins = static_cast<int>(lv);

  if (auto it = kv.find("seed"); it != kv.end()) {
    std::uint64_t s;
    if (!to_u64(it->second.value, &s))
      errs.push_back({it->second.line, "seed: not an unsigned integer"});
    else {
      cfg.seed = s;
      cfg.seed_defaulted = false;
    }
  }
  if (auto it = kv.find("variant"); it != kv.end()) {
    if (it->second.value == "rate_a")
      cfg.variant = coupling::Variant::rate_a;
    else if (it->second.value == "rate_b")
      cfg.variant = coupling::Variant::rate_b;
    else
      errs.push_back({it->second.line, "variant must be rate_a or rate_b"});
  }
  if (auto it = kv.find("out"); it != kv.end()) cfg.out = it->second.value;
  if (auto it = kv.find("observable"); it != kv.end())
    cfg.observable = join_ws(split_ws(it->second.value));
  if (auto it = kv.find("profile"); it != kv.end())
    cfg.profile = join_ws(split_ws(it->second.value));
  if (auto it = kv.find("tail"); it != kv.end())
    cfg.tail = join_ws(split_ws(it->second.value));

  if (!(cfg.gamma > 0.0 && cfg.gamma < 0.5))
    errs.push_back({line_of("gamma"), "gamma must lie in (0, 1/2)"});
  if (!(cfg.p >= 2.0 && cfg.p <= 3.0))
    errs.push_back({line_of("p"), "p must lie in (2, 3]"});
  else if (cfg.gamma > 0.0 && cfg.p > 1.0 / cfg.gamma) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "p <= 1/gamma violated: p = %g, 1/gamma = %g", cfg.p,
                  1.0 / cfg.gamma);
    errs.push_back({line_of("p"), buf});
  }
  if (cfg.variant == coupling::Variant::rate_b && !(cfg.epsilon > 0.0))
    errs.push_back({line_of("variant"), "rate_b requires epsilon > 0"});
  if (cfg.bins < 256 || (cfg.bins & (cfg.bins - 1)) != 0)
    errs.push_back({line_of("bins"), "bins must be a power of two >= 256"});
  if (!(cfg.tol > 0.0 && cfg.tol <= 1e-2))
    errs.push_back({line_of("tol"), "tol must lie in (0, 1e-2]"});
  if (cfg.out.empty()) errs.push_back({line_of("out"), "out must be nonempty"});

  try {
    cfg.f = parse_observable(cfg.observable);
  } catch (const std::invalid_argument& e) {
    errs.push_back({line_of("observable"), e.what()});
  }
  if (std::string err = check_profile(cfg.profile); !err.empty())
    errs.push_back({line_of("profile"), err});
  if (std::string err = check_tail(cfg.tail); !err.empty())
    errs.push_back({line_of("tail"), err});

  if (!errs.empty()) throw ConfigError(std::move(errs));
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError({{0, "cannot open config file: " + path}});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_text(const RunConfig& cfg) {
  std::string s;
  s += "gamma=" + fmt(cfg.gamma) + "\n";
  s += "observable=" + cfg.observable + "\n";
  s += "p=" + fmt(cfg.p) + "\n";
  s += std::string("variant=") +
       (cfg.variant == coupling::Variant::rate_a ? "rate_a" : "rate_b") + "\n";
  s += "epsilon=" + fmt(cfg.epsilon) + "\n";
  s += "L_max=" + std::to_string(cfg.L_max) + "\n";
  s += "M_cond=" + std::to_string(cfg.M_cond) + "\n";
  s += "reps=" + std::to_string(cfg.reps) + "\n";
  s += "seed=" + std::to_string(cfg.seed) + "\n";
  s += "bins=" + std::to_string(cfg.bins) + "\n";
  s += "tol=" + fmt(cfg.tol) + "\n";
  s += "out=" + cfg.out + "\n";
  s += "profile=" + cfg.profile + "\n";
  s += "tail=" + cfg.tail + "\n";
  return s;
}

std::string config_hash(const RunConfig& cfg) {
  std::string text = canonical_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace couplab::config
