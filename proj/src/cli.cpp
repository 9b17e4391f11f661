#include "agedep/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "agedep/bonds.hpp"
#include "agedep/errors.hpp"
#include "agedep/hedging.hpp"

namespace agedep::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// Typed access to one JSON object; remembers which keys were read so the rest can
// be reported as unknown.
class Section {
public:
    Section(const Json* j, std::string path, std::vector<std::string>& issues)
        : j_(j), path_(std::move(path)), issues_(issues) {
        if (j_ && !j_->is_object()) {
            issues_.push_back(path_ + ": expected an object");
            j_ = nullptr;
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_ && j_->contains(key);
    }

    const Json* raw(const std::string& key) {
        seen_.insert(key);
        if (!j_ || !j_->contains(key)) return nullptr;
        return &j_->at(key);
    }

    double number(const std::string& key, double fallback, bool required = false) {
        const Json* v = raw(key);
        if (!v) {
            if (required) issues_.push_back(where(key) + ": required");
            return fallback;
        }
        if (!v->is_number()) {
            issues_.push_back(where(key) + ": expected a number");
            return fallback;
        }
        return v->get<double>();
    }

    std::optional<double> maybe_number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return number(key, 0.0);
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) {
            issues_.push_back(where(key) + ": expected an integer");
            return fallback;
        }
        return v->get<std::int64_t>();
    }

    std::string text(const std::string& key, std::string fallback) {
        const Json* v = raw(key);
        if (!v) return fallback;
        if (!v->is_string()) {
            issues_.push_back(where(key) + ": expected a string");
            return fallback;
        }
        return v->get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, bool required) {
        const Json* v = raw(key);
        if (!v) {
            if (required) issues_.push_back(where(key) + ": required");
            return {};
        }
        return as_numbers(*v, where(key));
    }

    std::vector<double> as_numbers(const Json& v, const std::string& at) {
        std::vector<double> out;
        if (!v.is_array()) {
            issues_.push_back(at + ": expected an array of numbers");
            return out;
        }
        for (std::size_t a = 0; a < v.size(); ++a) {
            if (!v[a].is_number()) {
                issues_.push_back(at + "[" + std::to_string(a) + "]: expected a number");
                return {};
            }
            out.push_back(v[a].get<double>());
        }
        return out;
    }

    void finish() {
        if (!j_) return;
        for (const auto& [key, _] : j_->items()) {
            if (!seen_.count(key)) issues_.push_back(where(key) + ": unknown field");
        }
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::vector<std::string>& issues() { return issues_; }

private:
    const Json* j_;
    std::string path_;
    std::vector<std::string>& issues_;
    std::set<std::string> seen_;
};

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

bool is_barrier_kind(const std::string& k) { return k == "up_out_call" || k == "down_out_call"; }

bool path_dependent(const ClaimConfig& c) {
    return is_barrier_kind(c.kind) || (c.kind == "bond" && c.bond_model != 1);
}

}  // namespace

Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"config: cannot open " + path});
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ValidationError({std::string("config: parse error: ") + e.what()});
    }
}

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError({"--set " + assignment + ": expected key=value"});
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const Json::parse_error&) {
        value = text;
    }
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) throw ValidationError({"--set " + key + ": empty path segment"});
        parts.push_back(p);
    }
    Json* node = &config;
    for (std::size_t d = 0; d < parts.size(); ++d) {
        const std::string& p = parts[d];
        const bool last = d + 1 == parts.size();
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                std::size_t used = 0;
                idx = std::stoul(p, &used);
                if (used != p.size()) throw std::invalid_argument(p);
            } catch (const std::exception&) {
                throw ValidationError({"--set " + key + ": '" + p + "' is not an array index"});
            }
            if (idx >= node->size()) throw ValidationError({"--set " + key + ": index " + p + " out of range"});
            node = &(*node)[idx];
        } else {
            if (node->is_null()) *node = Json::object();
            if (!node->is_object()) throw ValidationError({"--set " + key + ": '" + p + "' is not inside a table"});
            node = &(*node)[p];
        }
        if (last) *node = value;
    }
}

ModelConfig parse_config(const Json& config) {
    std::vector<std::string> issues;
    ModelConfig cfg;
    Section top(&config, "", issues);

    top.text("description", "");

    {
        Section rates(top.raw("rates"), "rates", issues);
        if (!top.has("rates")) issues.push_back("rates: required");
        const Json* mats = rates.raw("matrices");
        if (!mats) {
            if (top.has("rates")) issues.push_back("rates.matrices: required");
        } else if (!mats->is_array() || mats->empty()) {
            issues.push_back("rates.matrices: expected a non-empty array of matrices");
        } else {
            for (std::size_t p = 0; p < mats->size(); ++p) {
                const std::string at = "rates.matrices[" + std::to_string(p) + "]";
                const Json& m = (*mats)[p];
                if (!m.is_array()) {
                    issues.push_back(at + ": expected an array of rows");
                    continue;
                }
                Matrix mat;
                for (std::size_t i = 0; i < m.size(); ++i) {
                    mat.push_back(rates.as_numbers(m[i], at + "[" + std::to_string(i) + "]"));
                }
                cfg.rates.push_back(std::move(mat));
            }
        }
        cfg.age_cap = rates.number("age_cap", 0.0);
        rates.finish();
    }

    {
        Section reg(top.raw("regimes"), "regimes", issues);
        if (!top.has("regimes")) issues.push_back("regimes: required");
        cfg.model.r = reg.numbers("r", top.has("regimes"));
        cfg.model.mu = reg.has("mu") ? reg.numbers("mu", true) : cfg.model.r;
        cfg.model.kappa = reg.has("kappa") ? reg.numbers("kappa", true) : std::vector<double>(cfg.model.r.size(), 0.0);
        reg.finish();
    }

    {
        Section vol(top.raw("vol"), "vol", issues);
        if (!top.has("vol")) issues.push_back("vol: required");
        const std::string kind = vol.text("kind", "constant");
        if (kind == "constant") {
            cfg.model.vol.kind = VolProfile::Kind::constant;
        } else if (kind == "monday") {
            cfg.model.vol.kind = VolProfile::Kind::monday;
        } else {
            issues.push_back("vol.kind: expected 'constant' or 'monday'");
        }
        cfg.model.vol.sigma0 = vol.numbers("sigma0", top.has("vol"));
        cfg.model.vol.alpha = vol.number("alpha", cfg.model.vol.alpha);
        cfg.model.vol.beta = vol.number("beta", cfg.model.vol.beta);
        cfg.model.vol.period = vol.number("period", cfg.model.vol.period);
        vol.finish();
    }

    {
        Section c(top.raw("claim"), "claim", issues);
        if (!top.has("claim")) issues.push_back("claim: required");
        auto& cl = cfg.claim;
        cl.kind = c.text("kind", cl.kind);
        static const std::set<std::string> kinds{"call", "put", "up_out_call", "down_out_call", "zcb", "bond"};
        if (!kinds.count(cl.kind)) {
            issues.push_back("claim.kind: '" + cl.kind +
                             "' is not one of call, put, up_out_call, down_out_call, zcb, bond");
        }
        cl.strike = c.number("strike", cl.strike);
        cl.barrier = c.number("barrier", cl.barrier);
        cl.maturity = c.number("maturity", cl.maturity);
        cl.recovery = c.number("recovery", cl.recovery);
        cl.bond_model = static_cast<int>(c.integer("bond_model", cl.bond_model));
        c.finish();
    }

    {
        Section s(top.raw("state"), "state", issues);
        cfg.state.t = s.number("t", 0.0);
        cfg.state.s = s.number("s", 1.0);
        cfg.state.regime = static_cast<int>(s.integer("regime", 1)) - 1;
        cfg.state.age = s.number("age", 0.0);
        s.finish();
    }

    {
        Section g(top.raw("grid"), "grid", issues);
        auto& gr = cfg.grid;
        gr.n_t = static_cast<int>(g.integer("n_t", gr.n_t));
        gr.n_logs = static_cast<int>(g.integer("n_logs", gr.n_logs));
        gr.s_min = g.number("s_min", gr.s_min);
        gr.s_max = g.number("s_max", gr.s_max);
        gr.n_y = static_cast<int>(g.integer("n_y", gr.n_y));
        gr.y_max = g.number("y_max", gr.y_max);
        gr.n_x = static_cast<int>(g.integer("n_x", gr.n_x));
        gr.trunc_sd = g.number("trunc_sd", gr.trunc_sd);
        g.finish();
    }

    {
        Section r(top.raw("run"), "run", issues);
        auto& rc = cfg.run;
        rc.tol = r.number("tol", rc.tol);
        rc.n_paths = r.integer("n_paths", rc.n_paths);
        const std::int64_t seed = r.integer("seed", static_cast<std::int64_t>(rc.seed));
        if (seed < 0) issues.push_back("run.seed: must be non-negative");
        rc.seed = static_cast<std::uint64_t>(std::max<std::int64_t>(seed, 0));
        rc.rebalance_dt = r.number("rebalance_dt", rc.rebalance_dt);
        rc.barrier_steps = static_cast<int>(r.integer("barrier_steps", rc.barrier_steps));
        rc.bias_allowance = r.maybe_number("bias_allowance");
        if (r.has("max_iter")) rc.max_iter = static_cast<int>(r.integer("max_iter", 0));
        const std::string kernel = r.text("barrier_kernel", "bridge");
        if (kernel == "bridge") {
            rc.barrier_kernel = BarrierKernel::bridge;
        } else if (kernel == "survival") {
            rc.barrier_kernel = BarrierKernel::survival;
        } else {
            issues.push_back("run.barrier_kernel: expected 'bridge' or 'survival'");
        }
        rc.sim_paths = r.integer("sim_paths", rc.sim_paths);
        rc.hedge_paths = r.integer("hedge_paths", rc.hedge_paths);
        if (const Json* pts = r.raw("eval_points")) {
            if (!pts->is_array()) {
                issues.push_back("run.eval_points: expected an array of [t, s, state, age]");
            } else {
                for (std::size_t a = 0; a < pts->size(); ++a) {
                    const auto v = r.as_numbers((*pts)[a], "run.eval_points[" + std::to_string(a) + "]");
                    if (v.size() != 4) {
                        issues.push_back("run.eval_points[" + std::to_string(a) + "]: expected [t, s, state, age]");
                        continue;
                    }
                    rc.eval_points.push_back(MarketState{v[0], v[1], static_cast<int>(v[2]) - 1, v[3]});
                }
            }
        }
        r.finish();
    }

    top.finish();
    if (!issues.empty()) throw ValidationError(std::move(issues));

    if (!(cfg.age_cap > 0.0)) cfg.age_cap = 4.0 * cfg.claim.maturity;
    cfg.grid.maturity = cfg.claim.maturity;
    if (cfg.claim.kind == "up_out_call") cfg.grid.s_max = cfg.claim.barrier;
    if (cfg.claim.kind == "down_out_call") cfg.grid.s_min = cfg.claim.barrier;
    return cfg;
}

RateSpec validate_config(const ModelConfig& cfg) {
    std::vector<std::string> issues;
    auto collect = [&](auto&& f) {
        try {
            f();
        } catch (const ValidationError& e) {
            issues.insert(issues.end(), e.issues().begin(), e.issues().end());
        }
    };
    std::optional<RateSpec> spec;
    collect([&] { spec.emplace(cfg.rates, cfg.age_cap); });
    collect([&] { cfg.model.validate(); });
    collect([&] { cfg.grid.validate(); });
    const int k = cfg.model.states();
    if (spec && spec->states() != k) {
        issues.push_back("regimes: " + std::to_string(k) + " regimes but rate matrices are " +
                         std::to_string(spec->states()) + "x" + std::to_string(spec->states()));
    }

    const auto& c = cfg.claim;
    if (!(c.maturity > 0.0)) issues.push_back("claim.maturity: must be positive");
    if (c.kind != "zcb" && !(c.strike > 0.0)) issues.push_back("claim.strike: must be positive");
    if (is_barrier_kind(c.kind)) {
        if (!(c.barrier > 0.0)) issues.push_back("claim.barrier: must be positive");
        if (!cfg.model.vol.is_constant()) issues.push_back("claim.kind: barrier claims need constant volatility");
        if (c.kind == "up_out_call" && !(c.strike < c.barrier)) {
            issues.push_back("claim.strike: must lie below the up-and-out barrier");
        }
        if (c.kind == "up_out_call" && !(cfg.state.s < c.barrier)) {
            issues.push_back("state.s: must lie below the up-and-out barrier");
        }
        if (c.kind == "down_out_call" && !(cfg.state.s > c.barrier)) {
            issues.push_back("state.s: must lie above the down-and-out barrier");
        }
    }
    if (c.kind == "bond") {
        if (c.bond_model < 1 || c.bond_model > 3) issues.push_back("claim.bond_model: expected 1, 2 or 3");
        if (c.bond_model >= 2) {
            if (!(c.barrier > 0.0 && c.barrier < c.strike)) {
                issues.push_back("claim.barrier: default threshold must satisfy 0 < J < K");
            }
            if (!(cfg.state.s > c.barrier)) issues.push_back("state.s: firm is already in default (s <= J)");
            if (!(c.barrier < cfg.grid.s_max)) issues.push_back("claim.barrier: must lie below grid.s_max");
        }
        if (c.bond_model == 2 && !cfg.model.vol.is_constant()) {
            issues.push_back("claim.bond_model: model 2 needs constant volatility");
        }
        if (c.bond_model == 3 && !(c.recovery >= 0.0 && c.recovery <= c.barrier / c.strike)) {
            issues.push_back("claim.recovery: must lie in [0, J/K]");
        }
    }

    const auto check_state = [&](const MarketState& st, const std::string& at) {
        if (!(st.t >= 0.0 && st.t < c.maturity)) issues.push_back(at + ".t: must lie in [0, maturity)");
        if (!(st.s > 0.0)) issues.push_back(at + ".s: must be positive");
        if (st.regime < 0 || st.regime >= k) {
            issues.push_back(at + ".regime: must lie in 1.." + std::to_string(k));
        }
        if (!(st.age >= 0.0)) issues.push_back(at + ".age: must be non-negative");
    };
    check_state(cfg.state, "state");
    for (std::size_t a = 0; a < cfg.run.eval_points.size(); ++a) {
        check_state(cfg.run.eval_points[a], "run.eval_points[" + std::to_string(a) + "]");
    }

    const auto& r = cfg.run;
    if (!(r.tol > 0.0)) issues.push_back("run.tol: must be positive");
    if (r.n_paths < 2) issues.push_back("run.n_paths: must be >= 2");
    if (!(r.rebalance_dt > 0.0)) issues.push_back("run.rebalance_dt: must be positive");
    if (r.barrier_steps < 1) issues.push_back("run.barrier_steps: must be >= 1");
    if (r.bias_allowance && !(*r.bias_allowance >= 0.0)) issues.push_back("run.bias_allowance: must be >= 0");
    if (r.max_iter && *r.max_iter < 1) issues.push_back("run.max_iter: must be >= 1");
    if (r.sim_paths < 1) issues.push_back("run.sim_paths: must be >= 1");
    if (r.hedge_paths < 2) issues.push_back("run.hedge_paths: must be >= 2");

    if (!issues.empty()) throw ValidationError(std::move(issues));
    return std::move(*spec);
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream os;
    for (unsigned int a = 0; a < len; ++a) os << std::hex << std::setw(2) << std::setfill('0') << int(md[a]);
    return os.str();
}

namespace {

class Csv {
public:
    Csv(const fs::path& path, const std::string& header) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << header << '\n';
    }
    template <class... T>
    void row(const T&... cols) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cols), first = false), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double x) { return fmt(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(std::int64_t x) { return std::to_string(x); }
    static std::string cell(const std::string& x) { return x; }
    static std::string cell(const char* x) { return x; }
    std::ofstream out_;
};

struct Context {
    ModelConfig cfg;
    RateSpec spec;
    fs::path out;
    Json& manifest;

    SolverOptions solver_options(bool full = true) const {
        SolverOptions o;
        o.tol = cfg.run.tol;
        o.max_iter = cfg.run.max_iter;
        o.barrier_kernel = cfg.run.barrier_kernel;
        o.full_surface = full;
        return o;
    }
    McOptions mc_options(std::int64_t paths) const {
        McOptions o;
        o.n_paths = paths;
        o.seed = cfg.run.seed;
        o.barrier_steps = cfg.run.barrier_steps;
        return o;
    }
    void output(const std::string& name) { manifest["outputs"].push_back(name); }
};

SolverClaim solver_claim(const ClaimConfig& c) {
    if (c.kind == "call") return SolverClaim::vanilla(PayoffSpec::call(c.strike));
    if (c.kind == "put") return SolverClaim::vanilla(PayoffSpec::put(c.strike));
    if (c.kind == "up_out_call") return SolverClaim::up_out_call(c.strike, c.barrier);
    if (c.kind == "down_out_call") return SolverClaim::down_out_call(c.strike, c.barrier);
    throw ValidationError({"claim.kind: '" + c.kind + "' is not solved on a price surface"});
}

Json surface_summary(const PriceSurface& s) {
    return Json{{"iterations", s.iterations},
                {"max_iter", s.max_iter},
                {"contraction_bound", s.contraction_bound},
                {"residual_history", s.residual_history}};
}

void write_surface(Context& ctx, const PriceSurface& surf, const VolterraOperator* op,
                   const std::vector<MarketState>& extra) {
    Csv csv(ctx.out / "surface.csv", "t,s,state,age,value");
    const auto& g = surf.grid;
    for (int n = 0; n < g.n_t; ++n)
        for (int i = 0; i < surf.states; ++i)
            for (int m = 0; m < g.n_logs; ++m)
                csv.row(g.time(n), std::exp(g.log_s(m)), i + 1, 0.0, surf.zero_at(n, i, m));
    for (const auto& st : extra) {
        const double v = op ? op->evaluate(surf, st) : surf.value(st);
        csv.row(st.t, st.s, st.regime + 1, st.age, v);
    }
    ctx.output("surface.csv");
}

std::vector<MarketState> eval_states(const ModelConfig& cfg) {
    std::vector<MarketState> pts{cfg.state};
    pts.insert(pts.end(), cfg.run.eval_points.begin(), cfg.run.eval_points.end());
    return pts;
}

int cmd_simulate(Context& ctx) {
    const auto& c = ctx.cfg;
    Csv csv(ctx.out / "paths.csv", "path_id,event_time,state,age_before,price");
    const double horizon = c.claim.maturity - c.state.t;
    std::int64_t jumps = 0;
    for (std::int64_t p = 0; p < c.run.sim_paths; ++p) {
        Rng chain_rng(c.run.seed, static_cast<std::uint64_t>(p), 0);
        Rng asset_rng(c.run.seed, static_cast<std::uint64_t>(p), 1);
        PathRecord path = simulate_chain(ctx.spec, c.state.regime, c.state.age, horizon, chain_rng,
                                         ChainMethod::thinning, c.state.t);
        simulate_asset(path, c.model, c.state.s, Measure::risk_neutral, asset_rng);
        jumps += static_cast<std::int64_t>(path.transitions.size());
        for (std::size_t q = 0; q < path.asset_samples.size(); ++q) {
            const auto& smp = path.asset_samples[q];
            const double age = q == 0 ? path.y0 : path.age_before(smp.time);
            csv.row(p, smp.time, path.state_at(smp.time) + 1, age, smp.price);
        }
    }
    ctx.output("paths.csv");
    ctx.manifest["results"] = Json{{"paths", c.run.sim_paths},
                                   {"mean_transitions", static_cast<double>(jumps) / c.run.sim_paths}};
    return 0;
}

int cmd_price(Context& ctx) {
    const auto& c = ctx.cfg;
    if (c.claim.kind == "zcb") {
        const ZcbSurface z = solve_zcb(c.model, ctx.spec, c.grid, ctx.solver_options());
        ctx.manifest["residual_history"]["zcb"] = z.residual_history;
        Csv csv(ctx.out / "surface.csv", "t,s,state,age,value");
        for (int n = 0; n < z.n_t; ++n)
            for (int i = 0; i < z.states; ++i) csv.row(z.dt() * n, 0.0, i + 1, 0.0, z.zero_at(n, i));
        for (const auto& st : eval_states(c)) csv.row(st.t, st.s, st.regime + 1, st.age, z.evaluate(st.t, st.regime, st.age));
        ctx.output("surface.csv");
        ctx.manifest["results"] = Json{{"iterations", z.iterations}, {"max_iter", z.max_iter}};
        return 0;
    }
    VolterraOperator op(c.model, ctx.spec, solver_claim(c.claim), c.grid, c.run.barrier_kernel);
    const PriceSurface surf = solve(op, ctx.solver_options(false));
    ctx.manifest["residual_history"]["surface"] = surf.residual_history;
    ctx.manifest["results"] = surface_summary(surf);
    write_surface(ctx, surf, &op, eval_states(c));
    return 0;
}

int cmd_hedge(Context& ctx) {
    const auto& c = ctx.cfg;
    VolterraOperator op(c.model, ctx.spec, solver_claim(c.claim), c.grid, c.run.barrier_kernel);
    const PriceSurface surf = solve(op, ctx.solver_options(true));
    ctx.manifest["residual_history"]["surface"] = surf.residual_history;

    Csv csv(ctx.out / "hedge.csv", "t,s,state,age,xi,eps,value");
    const auto& g = surf.grid;
    const int stride = std::max(1, (g.n_logs - 1) / 40);
    for (int i = 0; i < surf.states; ++i) {
        for (int m = (g.n_logs - 1) / 4; m <= 3 * (g.n_logs - 1) / 4; m += stride) {
            const MarketState st{c.state.t, std::exp(g.log_s(m)), i, c.state.age};
            const Strategy h = strategy_at(op, surf, st, 1.0);
            csv.row(st.t, st.s, i + 1, st.age, h.xi, h.eps, h.value);
        }
    }
    const Strategy h = strategy_at(op, surf, c.state, 1.0);
    csv.row(c.state.t, c.state.s, c.state.regime + 1, c.state.age, h.xi, h.eps, h.value);
    ctx.output("hedge.csv");

    const auto cost = summarize(pnl_simulate(hedge_target(surf), c.model, ctx.spec, c.state, c.run.rebalance_dt,
                                             Measure::risk_neutral, ctx.mc_options(c.run.hedge_paths)));
    Json res = surface_summary(surf);
    res["hedge_cost"] = Json{{"mean", cost.mean}, {"std_error", cost.std_error}, {"paths", cost.n},
                             {"rebalance_dt", c.run.rebalance_dt}};
    if (surf.claim.is_barrier()) {
        const auto rr = residual_risk_barrier(surf, c.model, ctx.spec, c.state, ctx.mc_options(c.run.hedge_paths));
        res["residual_risk"] = Json{{"mean", rr.mean}, {"std_error", rr.std_error}, {"paths", rr.n}};
    }
    ctx.manifest["results"] = res;
    return 0;
}

BondSurfaces bond_surfaces(Context& ctx) {
    const auto& c = ctx.cfg;
    BondTerms terms{c.claim.strike, c.claim.bond_model == 1 ? 0.0 : c.claim.barrier, c.claim.maturity};
    BondSurfaces b =
        build_bond_surfaces(c.model, ctx.spec, terms, c.grid, ctx.solver_options(), c.claim.bond_model == 2);
    auto& rh = ctx.manifest["residual_history"];
    rh["call"] = b.call.residual_history;
    rh["put"] = b.put.residual_history;
    rh["zcb"] = b.zcb.residual_history;
    if (b.down_out) rh["down_out_call"] = b.down_out->residual_history;
    if (b.call_above_j) rh["call_above_threshold"] = b.call_above_j->residual_history;
    return b;
}

int cmd_bond(Context& ctx) {
    const auto& c = ctx.cfg;
    if (c.claim.kind != "bond") throw ValidationError({"claim.kind: the bond command needs kind 'bond'"});
    const BondSurfaces b = bond_surfaces(ctx);
    Csv csv(ctx.out / "bond.csv", "model,t,s,state,age,debt,equity,std_error");
    for (int i = 0; i < c.model.states(); ++i) {
        MarketState st = c.state;
        st.regime = i;
        if (i != c.state.regime) st.age = 0.0;
        switch (c.claim.bond_model) {
            case 1: {
                const auto q = price_model1(b, st);
                csv.row(1, st.t, st.s, i + 1, st.age, q.debt, q.equity, "");
                break;
            }
            case 2: {
                const double debt = price_model2(b, st);
                csv.row(2, st.t, st.s, i + 1, st.age, debt, b.down_out->value(st), "");
                break;
            }
            default: {
                const auto est = price_model3(b, c.model, ctx.spec, st, c.claim.recovery, ctx.mc_options(c.run.n_paths));
                csv.row(3, st.t, st.s, i + 1, st.age, est.mean, "", est.std_error);
                break;
            }
        }
    }
    ctx.output("bond.csv");
    return 0;
}

int cmd_crosscheck(Context& ctx) {
    const auto& c = ctx.cfg;
    const double bias = c.run.bias_allowance.value_or(path_dependent(c.claim) ? 5e-3 : 0.0);
    ClaimSpec mc;
    mc.strike = c.claim.strike;
    mc.barrier = c.claim.barrier;
    mc.maturity = c.claim.maturity;
    std::function<double(const MarketState&)> solver;

    std::unique_ptr<VolterraOperator> op;
    PriceSurface surf;
    ZcbSurface zcb;
    std::optional<BondSurfaces> bond;
    const auto& kind = c.claim.kind;
    if (kind == "zcb") {
        zcb = solve_zcb(c.model, ctx.spec, c.grid, ctx.solver_options());
        ctx.manifest["residual_history"]["zcb"] = zcb.residual_history;
        mc.kind = ClaimSpec::Kind::zcb;
        solver = [&](const MarketState& st) { return zcb.evaluate(st.t, st.regime, st.age); };
    } else if (kind == "bond") {
        if (c.claim.bond_model == 3) {
            throw ValidationError({"claim.bond_model: model 3 is priced by simulation only; nothing to crosscheck"});
        }
        bond = bond_surfaces(ctx);
        if (c.claim.bond_model == 1) {
            mc.kind = ClaimSpec::Kind::bond_model_1;
            solver = [&](const MarketState& st) { return price_model1(*bond, st).debt; };
        } else {
            mc.kind = ClaimSpec::Kind::bond_model_2;
            solver = [&](const MarketState& st) { return price_model2(*bond, st); };
        }
    } else {
        op = std::make_unique<VolterraOperator>(c.model, ctx.spec, solver_claim(c.claim), c.grid,
                                                c.run.barrier_kernel);
        surf = solve(*op, ctx.solver_options(false));
        ctx.manifest["residual_history"]["surface"] = surf.residual_history;
        write_surface(ctx, surf, op.get(), {});
        static const std::map<std::string, ClaimSpec::Kind> kinds{{"call", ClaimSpec::Kind::call},
                                                                  {"put", ClaimSpec::Kind::put},
                                                                  {"up_out_call", ClaimSpec::Kind::up_out_call},
                                                                  {"down_out_call", ClaimSpec::Kind::down_out_call}};
        mc.kind = kinds.at(kind);
        solver = [&](const MarketState& st) { return op->evaluate(surf, st); };
    }

    Csv csv(ctx.out / "crosscheck.csv", "t,s,state,age,solver,mc_mean,mc_std_error,abs_diff,tolerance,pass");
    bool all = true;
    Json rows = Json::array();
    for (int i = 0; i < c.model.states(); ++i) {
        MarketState st = c.state;
        st.regime = i;
        if (i != c.state.regime) st.age = 0.0;
        const double v = solver(st);
        const McEstimate est = mc_price(mc, c.model, ctx.spec, st, ctx.mc_options(c.run.n_paths));
        const double diff = std::abs(v - est.mean);
        const double tol = 3.0 * est.std_error + bias;
        const bool ok = diff <= tol;
        all = all && ok;
        csv.row(st.t, st.s, i + 1, st.age, v, est.mean, est.std_error, diff, tol, ok ? "1" : "0");
        rows.push_back(Json{{"state", i + 1}, {"solver", v}, {"mc_mean", est.mean}, {"mc_std_error", est.std_error},
                            {"pass", ok}});
    }
    ctx.output("crosscheck.csv");
    ctx.manifest["results"] = Json{{"bias_allowance", bias}, {"rows", rows}, {"pass", all}};
    return all ? 0 : 1;
}

Json versions() {
    Json v{{"agedep", kVersion},
           {"cxx_standard", static_cast<long>(__cplusplus)},
           {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
           {"cli11", CLI11_VERSION},
           {"openssl", OPENSSL_VERSION_TEXT}};
#ifdef __VERSION__
    v["compiler"] = __VERSION__;
#endif
#ifdef _OPENMP
    v["openmp"] = _OPENMP;
#endif
    return v;
}

void write_manifest(const fs::path& out, const Json& manifest, std::ostream& err) {
    std::error_code ec;
    fs::create_directories(out, ec);
    std::ofstream f(out / "manifest.json", std::ios::binary);
    if (!f) {
        err << "cannot write " << (out / "manifest.json").string() << '\n';
        return;
    }
    f << manifest.dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
    std::vector<CLI::Option*> seed_opts;

    CLI::App app{"Regime-switching option, barrier and bond pricer with Monte Carlo cross-checks", "agedep"};
    app.require_subcommand(1);
    const std::vector<std::pair<std::string, std::string>> commands{
        {"validate", "Check the model config and exit"},
        {"simulate", "Write simulated regime and asset paths to paths.csv"},
        {"price", "Solve the pricing equation and write surface.csv"},
        {"hedge", "Write the risk-minimising strategy to hedge.csv"},
        {"bond", "Price structural debt and equity into bond.csv"},
        {"crosscheck", "Compare the solver with Monte Carlo; nonzero exit on mismatch"}};
    for (const auto& [name, help] : commands) {
        auto* sc = app.add_subcommand(name, help);
        sc->add_option("--config", config_path, "Model config (JSON)")->required();
        sc->add_option("--out", out_dir, "Output directory");
        seed_opts.push_back(sc->add_option("--seed", seed, "Override run.seed"));
        sc->add_option("--set", sets, "Override a config value: dotted.key=value")->take_all();
    }

    Json manifest{{"tool", "agedep"}, {"version", kVersion}, {"args", args}, {"versions", versions()}};
    manifest["outputs"] = Json::array();
    manifest["errors"] = Json::array();
    manifest["residual_history"] = Json::object();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        manifest["status"] = "usage_error";
        manifest["exit_code"] = 2;
        manifest["errors"].push_back(e.what());
        write_manifest(out_dir, manifest, err);
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const bool seed_given = std::any_of(seed_opts.begin(), seed_opts.end(), [](auto* o) { return o->count() > 0; });
    manifest["command"] = command;
    manifest["config_path"] = config_path;

    int code = 0;
    std::string status = "ok";
    try {
        Json raw = load_json(config_path);
        for (const auto& s : sets) apply_override(raw, s);
        if (seed_given) apply_override(raw, "run.seed=" + std::to_string(seed));
        manifest["config_hash"] = "sha256:" + sha256_hex(raw.dump());
        ModelConfig cfg = parse_config(raw);
        manifest["seed"] = cfg.run.seed;
        RateSpec spec = validate_config(cfg);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw std::runtime_error("cannot create output directory " + out_dir);
        Context ctx{std::move(cfg), std::move(spec), fs::path(out_dir), manifest};
        if (command == "simulate") code = cmd_simulate(ctx);
        else if (command == "price") code = cmd_price(ctx);
        else if (command == "hedge") code = cmd_hedge(ctx);
        else if (command == "bond") code = cmd_bond(ctx);
        else if (command == "crosscheck") code = cmd_crosscheck(ctx);
        if (code == 1) status = "crosscheck_failed";
    } catch (const ValidationError& e) {
        code = 2;
        status = "validation_error";
        for (const auto& s : e.issues()) manifest["errors"].push_back(s);
    } catch (const ConvergenceError& e) {
        code = 3;
        status = "convergence_error";
        manifest["errors"].push_back(e.what());
        manifest["residual_history"]["failed"] = e.residual_history();
    } catch (const UnsupportedModelError& e) {
        code = 2;
        status = "validation_error";
        manifest["errors"].push_back(e.what());
    } catch (const DefaultedStateError& e) {
        code = 2;
        status = "validation_error";
        manifest["errors"].push_back(e.what());
    } catch (const std::invalid_argument& e) {
        code = 2;
        status = "validation_error";
        manifest["errors"].push_back(e.what());
    } catch (const std::exception& e) {
        code = 1;
        status = "error";
        manifest["errors"].push_back(e.what());
    }

    manifest["status"] = status;
    manifest["exit_code"] = code;
    manifest["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(out_dir, manifest, err);
    if (code != 0) {
        err << Json{{"status", status}, {"exit_code", code}, {"errors", manifest["errors"]}}.dump() << '\n';
    } else {
        out << command << ": ok (" << (fs::path(out_dir) / "manifest.json").string() << ")\n";
    }
    return code;
}

}  // namespace agedep::cli
