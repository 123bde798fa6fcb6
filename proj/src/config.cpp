#include "rdw/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rdw/csv.hpp"
#include "rdw/errors.hpp"

namespace rdw {

const char* const kKnownKinds[6] = {"sanity", "lemmas", "scaling", "fluctuation", "uniqueness", "clt"};

bool known_kind(const std::string& kind) {
    return std::any_of(std::begin(kKnownKinds), std::end(kKnownKinds),
                       [&](const char* k) { return kind == k; });
}

namespace csv {
std::string slug(double x) {
    std::string s = fmt(x);
    for (char& c : s) {
        if (c == '.') c = 'p';
        if (c == '-') c = 'm';
    }
    return s;
}
}  // namespace csv

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    std::ostringstream os;
    os << origin << ":" << line << ": " << msg;
    throw ConfigError(os.str());
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& origin, int line, const std::string& v) {
    double out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto r = std::from_chars(first, last, out);
    if (r.ec != std::errc{} || r.ptr != last) fail(origin, line, "expected a number, got '" + v + "'");
    return out;
}

long long parse_int(const std::string& origin, int line, const std::string& v) {
    long long out{};
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
        fail(origin, line, "expected an integer, got '" + v + "'");
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

}  // namespace

StatContext ExperimentConfig::stat_context() const {
    StatContext ctx;
    ctx.potential = potential;
    ctx.dist = dist;
    ctx.solver = solver;
    ctx.p = p;
    return ctx;
}

double ExperimentConfig::truncation_level(double theta) const {
    if (truncation_t > 0.0) return truncation_t;
    return 1.0 + potential.c0() * theta * dist.gmax + 0.5;
}

void ExperimentConfig::validate() const {
    if (!known_kind(kind)) throw ConfigError("config: unknown experiment.kind '" + kind + "'");
    if (dim < 1 || dim > 3) throw ConfigError("config: experiment.dim must be in {1,2,3}");
    if (ns.empty()) throw ConfigError("config: experiment.n must be a nonempty list");
    for (std::size_t i = 0; i + 1 < ns.size(); ++i)
        if (ns[i] >= ns[i + 1]) throw ConfigError("config: experiment.n must be strictly ascending");
    for (int n : ns) {
        GridSpec g;
        g.dim = dim;
        g.n = n;
        g.p = p > 0 ? p : stat_context().grid_p(dim);
        g.validate();
    }
    if (thetas.empty()) throw ConfigError("config: experiment.theta must be a nonempty list");
    for (double t : thetas)
        if (t < 0.0) throw ConfigError("config: experiment.theta must be nonnegative");
    if (reps < 1) throw ConfigError("config: experiment.reps must be >= 1");
    if (!dist.valid()) throw ConfigError("config: field.gmax must be positive");
    {
        const H1Report rep = verify_h1(potential);
        if (!rep.all_pass()) {
            for (const H1Clause& c : rep.clauses)
                if (!c.pass)
                    throw ConfigError("config: potential violates the double-well requirement '" +
                                      c.name + "'");
        }
    }
    solver.validate(potential);
    if (k_conditional < 1 || k_w0 < 1 || k_b_lower < 1)
        throw ConfigError("config: nested replica counts must be >= 1");
    if (workers < 1) throw ConfigError("config: output.workers must be >= 1");
    if (failure_budget < 0) throw ConfigError("config: solver.failure_budget must be >= 0");
    if (truncation_t != 0.0) {
        const double theta_max = *std::max_element(thetas.begin(), thetas.end());
        const double threshold = 1.0 + potential.c0() * theta_max * dist.gmax;
        if (truncation_t <= threshold)
            throw ConfigError("config: truncation.t must exceed 1 + c0 theta gmax");
    }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    double c0 = 1.0, delta0 = 0.5;
    std::map<std::string, int> seen;

    std::istringstream is(text);
    std::string rawline;
    int lineno = 0;
    while (std::getline(is, rawline)) {
        ++lineno;
        std::string line = rawline;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, lineno, "empty key");
        if (value.empty()) fail(origin, lineno, "empty value for '" + key + "'");
        if (seen.count(key)) fail(origin, lineno, "duplicate key '" + key + "' (first at line " +
                                                      std::to_string(seen[key]) + ")");
        seen[key] = lineno;
        cfg.raw[key] = value;

        if (key == "experiment.kind") {
            cfg.kind = value;
        } else if (key == "experiment.master_seed") {
            cfg.master_seed = static_cast<std::uint64_t>(parse_int(origin, lineno, value));
        } else if (key == "experiment.dim") {
            cfg.dim = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "experiment.theta") {
            cfg.thetas.clear();
            for (const auto& part : split_list(value))
                cfg.thetas.push_back(parse_double(origin, lineno, part));
        } else if (key == "experiment.n") {
            cfg.ns.clear();
            for (const auto& part : split_list(value))
                cfg.ns.push_back(static_cast<int>(parse_int(origin, lineno, part)));
        } else if (key == "experiment.reps") {
            cfg.reps = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "grid.p") {
            cfg.p = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "potential.c0") {
            c0 = parse_double(origin, lineno, value);
        } else if (key == "potential.delta0") {
            delta0 = parse_double(origin, lineno, value);
        } else if (key == "field.gmax") {
            cfg.dist.gmax = parse_double(origin, lineno, value);
        } else if (key == "solver.scheme") {
            if (value == "semi_implicit_flow") cfg.solver.scheme = Scheme::semi_implicit_flow;
            else if (value == "monotone_iteration") cfg.solver.scheme = Scheme::monotone_iteration;
            else fail(origin, lineno, "unknown solver.scheme '" + value + "'");
        } else if (key == "solver.tau") {
            cfg.solver.tau = parse_double(origin, lineno, value);
        } else if (key == "solver.residual_tol") {
            cfg.solver.residual_tol = parse_double(origin, lineno, value);
        } else if (key == "solver.energy_tol") {
            cfg.solver.energy_tol = parse_double(origin, lineno, value);
        } else if (key == "solver.max_iters") {
            cfg.solver.max_iters = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "solver.monotone_shift") {
            cfg.solver.monotone_shift = parse_double(origin, lineno, value);
        } else if (key == "solver.failure_budget") {
            cfg.failure_budget = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "nested.k_conditional") {
            cfg.k_conditional = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "nested.k_w0") {
            cfg.k_w0 = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "nested.k_b_lower") {
            cfg.k_b_lower = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "nested.m_extra") {
            cfg.m_extra = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "nested.a_list") {
            cfg.a_list.clear();
            for (const auto& part : split_list(value))
                cfg.a_list.push_back(parse_double(origin, lineno, part));
        } else if (key == "truncation.t") {
            cfg.truncation_t = parse_double(origin, lineno, value);
        } else if (key == "output.dir") {
            cfg.output_dir = value;
        } else if (key == "output.workers") {
            cfg.workers = static_cast<int>(parse_int(origin, lineno, value));
        } else if (key == "output.dump_fields") {
            cfg.dump_fields = parse_int(origin, lineno, value) != 0;
        } else {
            fail(origin, lineno, "unknown key '" + key + "'");
        }
    }

    try {
        cfg.potential = PotentialSpec(c0, delta0);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig validate_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str(), path);
}

}  // namespace rdw
