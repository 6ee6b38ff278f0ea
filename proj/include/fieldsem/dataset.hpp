#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <charconv>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fieldsem/config.hpp"
#include "fieldsem/errors.hpp"

namespace fieldsem {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

// Observation schemes:
//   pair_xt         claims (x, t) and unreturned units with a censor time for x + t
//   pair_xt_direct  as pair_xt, plus direct-sale units with right-censored or observed lifetimes
//   triple_xyt      grouped sums x + y + t with auxiliary interval-censored x / y samples
enum class Scheme { pair_xt, pair_xt_direct, triple_xyt };

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::pair_xt: return "pair_xt";
    case Scheme::pair_xt_direct: return "pair_xt_direct";
    case Scheme::triple_xyt: return "triple_xyt";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "pair_xt") return Scheme::pair_xt;
  if (name == "pair_xt_direct") return Scheme::pair_xt_direct;
  if (name == "triple_xyt") return Scheme::triple_xyt;
  throw ConfigError("unknown scheme '" + std::string(name) + "' (expected pair_xt, pair_xt_direct or triple_xyt)");
}

// Returned unit with sales lag x and lifetime t. `censor` is the end-of-study
// window of its shipment (infinite when unknown).
struct Claim {
  double x;
  double t;
  double censor = infinity;
  bool operator==(const Claim&) const = default;
};

// Unit with no claim by the end of study; censor = end of study - shipment date.
struct Unreturned {
  double censor;
  bool operator==(const Unreturned&) const = default;
};

// Directly sold unit still working `censor` months after its sale.
struct DirectCensored {
  double censor;
  bool operator==(const DirectCensored&) const = default;
};

// Directly sold unit that failed at age t.
struct DirectFailure {
  double t;
  bool operator==(const DirectFailure&) const = default;
};

// Returned unit whose shipment-to-return time x + y + t lies in [lower, upper).
struct SumClaim {
  double lower;
  double upper;
  bool operator==(const SumClaim&) const = default;
};

// Unit not returned `censor` months after shipment: x + y + t >= censor.
struct SumUnreturned {
  double censor;
  bool operator==(const SumUnreturned&) const = default;
};

using UnitRecord = std::variant<Claim, Unreturned, DirectCensored, DirectFailure, SumClaim, SumUnreturned>;

enum class AuxTarget { sales_lag, report_delay };

struct AuxSample {
  AuxTarget target;
  double lower;
  double upper;
  bool operator==(const AuxSample&) const = default;
};

struct FieldDataset {
  double tau = infinity;
  Scheme scheme = Scheme::pair_xt;
  std::vector<UnitRecord> records;
  std::vector<AuxSample> aux;

  std::size_t units() const { return records.size(); }

  std::size_t claims() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const UnitRecord& r) {
      return std::holds_alternative<Claim>(r) || std::holds_alternative<SumClaim>(r) ||
             std::holds_alternative<DirectFailure>(r);
    }));
  }

  std::size_t missing() const { return units() - claims(); }

  bool operator==(const FieldDataset&) const = default;
};

inline bool record_allowed(Scheme scheme, const UnitRecord& r) {
  switch (scheme) {
    case Scheme::pair_xt: return std::holds_alternative<Claim>(r) || std::holds_alternative<Unreturned>(r);
    case Scheme::pair_xt_direct:
      return std::holds_alternative<Claim>(r) || std::holds_alternative<Unreturned>(r) ||
             std::holds_alternative<DirectCensored>(r) || std::holds_alternative<DirectFailure>(r);
    case Scheme::triple_xyt: return std::holds_alternative<SumClaim>(r) || std::holds_alternative<SumUnreturned>(r);
  }
  return false;
}

inline std::string_view record_kind(const UnitRecord& r) {
  static constexpr std::string_view names[] = {"claim",          "unreturned", "direct_censored",
                                               "direct_failure", "sum_claim",  "sum_unreturned"};
  return names[r.index()];
}

struct Violation {
  std::size_t index;  // record index; aux samples follow the records
  std::string message;
};

// Observability and domain checks. Violations are returned, not thrown.
inline std::vector<Violation> validate_dataset(const FieldDataset& d) {
  std::vector<Violation> out;
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!(d.tau >= 0.0)) out.push_back({0, "warranty length must be nonnegative"});
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const UnitRecord& rec = d.records[i];
    auto bad = [&](std::string msg) { out.push_back({i, std::move(msg)}); };
    if (!record_allowed(d.scheme, rec)) {
      bad(std::string(record_kind(rec)) + " record not allowed in scheme " + std::string(scheme_name(d.scheme)));
      continue;
    }
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Claim>) {
            if (!positive(r.x)) bad("sales lag must be positive");
            if (!positive(r.t)) bad("lifetime must be positive");
            if (!(r.t < d.tau)) bad("lifetime exceeds warranty");
            if (!(r.x + r.t < r.censor)) bad("claim falls after end of study");
          } else if constexpr (std::is_same_v<R, Unreturned> || std::is_same_v<R, SumUnreturned>) {
            if (!positive(r.censor)) bad("censor time must be positive");
          } else if constexpr (std::is_same_v<R, DirectCensored>) {
            if (!(r.censor >= 0.0) || !std::isfinite(r.censor)) bad("censor time must be nonnegative");
          } else if constexpr (std::is_same_v<R, DirectFailure>) {
            if (!positive(r.t)) bad("lifetime must be positive");
            if (!(r.t < d.tau)) bad("lifetime exceeds warranty");
          } else if constexpr (std::is_same_v<R, SumClaim>) {
            if (!(r.lower >= 0.0)) bad("interval lower bound must be nonnegative");
            if (!(r.lower < r.upper)) bad("empty interval");
            if (!std::isfinite(r.upper)) bad("claim interval must be bounded");
          }
        },
        rec);
  }
  for (std::size_t j = 0; j < d.aux.size(); ++j) {
    const AuxSample& a = d.aux[j];
    const std::size_t idx = d.records.size() + j;
    if (d.scheme != Scheme::triple_xyt) out.push_back({idx, "aux samples are only allowed in scheme triple_xyt"});
    if (!(a.lower >= 0.0)) out.push_back({idx, "interval lower bound must be nonnegative"});
    if (!(a.lower < a.upper)) out.push_back({idx, "empty interval"});
  }
  return out;
}

// Throws ValidationError unless the dataset is valid and has at least one observed claim.
inline void require_fittable(const FieldDataset& d) {
  const auto violations = validate_dataset(d);
  if (!violations.empty()) {
    throw ValidationError("record " + std::to_string(violations.front().index) + ": " + violations.front().message +
                          (violations.size() > 1 ? " (+" + std::to_string(violations.size() - 1) + " more)" : ""));
  }
  if (d.claims() == 0) throw ValidationError("no observed claims");
}

struct DatasetSummary {
  std::size_t units = 0;
  std::size_t claims = 0;
  std::size_t aux = 0;
  double missing_rate = 0.0;
  double tau = infinity;
  double censor_min = infinity;
  double censor_max = -infinity;
  Scheme scheme = Scheme::pair_xt;
};

inline DatasetSummary dataset_summary(const FieldDataset& d) {
  DatasetSummary s;
  s.units = d.units();
  s.claims = d.claims();
  s.aux = d.aux.size();
  s.missing_rate = s.units == 0 ? 0.0 : static_cast<double>(s.units - s.claims) / static_cast<double>(s.units);
  s.tau = d.tau;
  s.scheme = d.scheme;
  for (const auto& rec : d.records) {
    double c = std::numeric_limits<double>::quiet_NaN();
    if (auto* u = std::get_if<Unreturned>(&rec)) c = u->censor;
    if (auto* u = std::get_if<SumUnreturned>(&rec)) c = u->censor;
    if (auto* u = std::get_if<DirectCensored>(&rec)) c = u->censor;
    if (!std::isnan(c)) {
      s.censor_min = std::min(s.censor_min, c);
      s.censor_max = std::max(s.censor_max, c);
    }
  }
  return s;
}

inline std::ostream& operator<<(std::ostream& out, const DatasetSummary& s) {
  out << "scheme=" << scheme_name(s.scheme) << '\n'
      << "N=" << s.units << '\n'
      << "C=" << s.claims << '\n'
      << "aux=" << s.aux << '\n'
      << "missing_rate=" << format_number(s.missing_rate) << '\n'
      << "tau=" << format_number(s.tau) << '\n';
  if (s.censor_min <= s.censor_max) {
    out << "censor_min=" << format_number(s.censor_min) << '\n' << "censor_max=" << format_number(s.censor_max) << '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: kind,x,t,a,b,censor_c,target[,count]

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  while (true) {
    const auto comma = line.find(',');
    cells.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return cells;
}

}  // namespace detail

inline constexpr std::string_view csv_header = "kind,x,t,a,b,censor_c,target,count";

inline FieldDataset read_dataset(std::istream& in, double tau, Scheme scheme) {
  enum Col { kind, x, t, a, b, censor, target, count };
  FieldDataset d;
  d.tau = tau;
  d.scheme = scheme;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool has_count = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto cells = detail::split_csv(body);
    if (!have_header) {
      if (body == csv_header) {
        has_count = true;
      } else if (body != csv_header.substr(0, csv_header.rfind(','))) {
        throw ParseError("expected header '" + std::string(csv_header) + "'", lineno);
      }
      have_header = true;
      continue;
    }
    const std::size_t ncols = has_count ? 8 : 7;
    if (cells.size() != ncols) {
      throw ParseError("expected " + std::to_string(ncols) + " fields, got " + std::to_string(cells.size()), lineno);
    }
    cells.resize(8);
    auto num = [&](Col c, const char* name) {
      double v = 0.0;
      if (!parse_number(cells[c], v)) throw ParseError(std::string("field '") + name + "' is missing or not a number", lineno);
      return v;
    };
    auto opt_num = [&](Col c, const char* name, double fallback) {
      return cells[c].empty() ? fallback : num(c, name);
    };
    auto require_empty = [&](std::initializer_list<Col> cols) {
      static constexpr const char* names[] = {"kind", "x", "t", "a", "b", "censor_c", "target", "count"};
      for (Col c : cols) {
        if (!cells[c].empty()) throw ParseError(std::string("field '") + names[c] + "' must be empty for this kind", lineno);
      }
    };
    std::size_t repeat = 1;
    if (has_count && !cells[count].empty()) {
      const auto [ptr, ec] = std::from_chars(cells[count].data(), cells[count].data() + cells[count].size(), repeat);
      if (ec != std::errc() || ptr != cells[count].data() + cells[count].size() || repeat == 0) {
        throw ParseError("count must be a positive integer", lineno);
      }
    }
    const std::string_view k = cells[kind];
    std::optional<UnitRecord> rec;
    std::optional<AuxSample> aux;
    if (k == "claim") {
      require_empty({a, b, target});
      rec = Claim{num(x, "x"), num(t, "t"), opt_num(censor, "censor_c", infinity)};
    } else if (k == "unreturned") {
      require_empty({x, t, a, b, target});
      rec = Unreturned{num(censor, "censor_c")};
    } else if (k == "direct_censored") {
      require_empty({x, t, a, b, target});
      rec = DirectCensored{num(censor, "censor_c")};
    } else if (k == "direct_failure") {
      require_empty({x, a, b, censor, target});
      rec = DirectFailure{num(t, "t")};
    } else if (k == "sum_claim") {
      require_empty({x, t, censor, target});
      rec = SumClaim{num(a, "a"), num(b, "b")};
    } else if (k == "sum_unreturned") {
      require_empty({x, t, a, b, target});
      rec = SumUnreturned{num(censor, "censor_c")};
    } else if (k == "aux") {
      require_empty({x, t, censor});
      AuxTarget tg;
      if (cells[target] == "sales_lag") tg = AuxTarget::sales_lag;
      else if (cells[target] == "report_delay") tg = AuxTarget::report_delay;
      else throw ParseError("aux target must be sales_lag or report_delay", lineno);
      aux = AuxSample{tg, num(a, "a"), opt_num(b, "b", infinity)};
    } else {
      throw ParseError("unknown record kind '" + std::string(k) + "'", lineno);
    }
    if (rec && !record_allowed(scheme, *rec)) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + std::string(k) + " record not allowed in scheme " +
                        std::string(scheme_name(scheme)));
    }
    if (aux && scheme != Scheme::triple_xyt) {
      throw SchemaError("line " + std::to_string(lineno) + ": aux samples are only allowed in scheme triple_xyt");
    }
    for (std::size_t r = 0; r < repeat; ++r) {
      if (rec) d.records.push_back(*rec);
      if (aux) d.aux.push_back(*aux);
    }
  }
  if (!have_header) throw ParseError("empty file: header required", lineno);
  return d;
}

// Reads and validates a dataset; tau and scheme come from the run configuration.
inline FieldDataset load_dataset(const std::string& path, const KeyValueConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  FieldDataset d = read_dataset(in, cfg.get_number("tau"), parse_scheme(cfg.get("scheme")));
  require_fittable(d);
  return d;
}

// Writes the CSV form. Runs of identical consecutive rows are collapsed into one row with a count.
inline void write_dataset(std::ostream& out, const FieldDataset& d) {
  out << csv_header << '\n';
  auto row = [](const UnitRecord& rec) {
    const std::string kind(record_kind(rec));
    return std::visit(
        [&](const auto& r) -> std::string {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Claim>) {
            return kind + "," + format_number(r.x) + "," + format_number(r.t) + ",,," +
                   (std::isinf(r.censor) ? std::string() : format_number(r.censor)) + ",";
          } else if constexpr (std::is_same_v<R, DirectFailure>) {
            return kind + ",," + format_number(r.t) + ",,,,";
          } else if constexpr (std::is_same_v<R, SumClaim>) {
            return kind + ",,," + format_number(r.lower) + "," + format_number(r.upper) + ",,";
          } else {
            return kind + ",,,,," + format_number(r.censor) + ",";
          }
        },
        rec);
  };
  auto emit_runs = [&](std::size_t n, auto&& row_of) {
    std::size_t i = 0;
    while (i < n) {
      const std::string text = row_of(i);
      std::size_t j = i + 1;
      while (j < n && row_of(j) == text) ++j;
      out << text << ',';
      if (j - i > 1) out << (j - i);
      out << '\n';
      i = j;
    }
  };
  emit_runs(d.records.size(), [&](std::size_t i) { return row(d.records[i]); });
  emit_runs(d.aux.size(), [&](std::size_t i) {
    const AuxSample& a = d.aux[i];
    return "aux,,," + format_number(a.lower) + "," + (std::isinf(a.upper) ? std::string("inf") : format_number(a.upper)) +
           ",," + (a.target == AuxTarget::sales_lag ? "sales_lag" : "report_delay");
  });
}

// Whole days from `from` to `to` (ISO YYYY-MM-DD) expressed in 30.4375-day months.
inline double months_between(std::string_view from, std::string_view to) {
  auto parse = [](std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    s = trim(s);
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw DomainError("expected ISO date YYYY-MM-DD, got '" + std::string(s) + "'");
    auto field = [&](std::size_t pos, std::size_t len, auto& v) {
      const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
      if (ec != std::errc() || ptr != s.data() + pos + len) throw DomainError("bad ISO date '" + std::string(s) + "'");
    };
    field(0, 4, y);
    field(5, 2, m);
    field(8, 2, d);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw DomainError("invalid calendar date '" + std::string(s) + "'");
    return std::chrono::sys_days{ymd};
  };
  const auto days = (parse(to) - parse(from)).count();
  return static_cast<double>(days) / 30.4375;
}

}  // namespace fieldsem
