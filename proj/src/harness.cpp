#include "qrc/harness.hpp"

#include "qrc/classical_spin.hpp"

#include "json.hpp"
#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace qrc {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string ExperimentConfig::resolve(const std::string& path) const {
    if (path.rfind("builtin:", 0) == 0 || fs::path(path).is_absolute())
        return path;
    return (fs::path(base_dir) / path).lexically_normal().string();
}

// -- config parsing ---------------------------------------------------------

namespace {

class Reader {
public:
    explicit Reader(std::vector<std::string>& issues) : issues_(issues) {}

    void issue(const std::string& s) { issues_.push_back(s); }

    void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) {
            issue(where + ": expected an object");
            return;
        }
        for (const auto& [k, v] : obj.items()) {
            bool ok = false;
            for (const char* a : allowed)
                ok = ok || k == a;
            if (!ok)
                issue(where + ": unknown key '" + k + "'");
        }
    }

    template <class T>
    T get(const json& obj, const char* key, const std::string& where, T fallback) {
        if (!obj.is_object() || !obj.contains(key))
            return fallback;
        try {
            return obj.at(key).get<T>();
        } catch (const json::exception&) {
            issue(where + "." + key + ": wrong type");
            return fallback;
        }
    }

    /// Scalar or list of the element type.
    template <class T>
    std::vector<T> list(const json& obj, const char* key, const std::string& where, std::vector<T> fallback) {
        if (!obj.is_object() || !obj.contains(key))
            return fallback;
        const auto& v = obj.at(key);
        try {
            if (v.is_array())
                return v.get<std::vector<T>>();
            return {v.get<T>()};
        } catch (const json::exception&) {
            issue(where + "." + key + ": wrong type");
            return fallback;
        }
    }

private:
    std::vector<std::string>& issues_;
};

std::vector<int> int_list_or_range(Reader& r, const json& obj, const char* key, const std::string& where,
                                   std::vector<int> fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    const auto& v = obj.at(key);
    if (v.is_object()) {
        r.check_keys(v, where + "." + key, {"from", "to"});
        const int a = r.get<int>(v, "from", where + "." + key, 1);
        const int b = r.get<int>(v, "to", where + "." + key, a);
        std::vector<int> out;
        for (int i = a; i <= b; ++i)
            out.push_back(i);
        return out;
    }
    return r.list<int>(obj, key, where, fallback);
}

AngleMap parse_angle_map(const std::string& s, Reader& r) {
    if (s == "arcsin")
        return AngleMap::arcsin;
    if (s == "linear")
        return AngleMap::linear;
    r.issue("unknown angle map '" + s + "' (expected arcsin or linear)");
    return AngleMap::arcsin;
}

int washout_for(const ExperimentConfig& c, std::size_t tau_index) {
    const double tau = c.qrc.tau.at(tau_index);
    if (c.task.kind == TaskKind::weather)
        return static_cast<int>(c.task.weather_washout);
    const auto& v = c.qrc.washout.values;
    if (v.empty())
        return std::max(static_cast<int>(std::ceil(10.0 / tau - 1e-9)), c.task.kind == TaskKind::stm ? c.task.max_delay : 0);
    return v.size() == 1 ? v[0] : v.at(tau_index);
}

ExperimentConfig parse_impl(const std::string& text, const std::string& base_dir, std::vector<std::string>& issues) {
    Reader r(issues);
    ExperimentConfig c;
    c.base_dir = base_dir;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        issues.push_back(std::string("config is not valid JSON: ") + e.what());
        return c;
    }
    c.canonical = doc.dump();
    r.check_keys(doc, "config",
                 {"name", "molecule", "max_spins", "output_dir", "seeds", "models", "reservoir", "task", "classical",
                  "esn", "learning", "output"});
    c.name = r.get<std::string>(doc, "name", "config", "experiment");
    c.molecule = r.get<std::string>(doc, "molecule", "config", "builtin:diethyl_fluoromalonate");
    c.max_spins = r.get<int>(doc, "max_spins", "config", kDefaultMaxSpins);
    c.output_dir = r.get<std::string>(doc, "output_dir", "config", c.name);
    if (doc.is_object() && doc.contains("seeds") && doc["seeds"].is_object()) {
        c.seeds.clear();
        for (int v : int_list_or_range(r, doc, "seeds", "config", {0})) {
            if (v < 0)
                r.issue("config.seeds: seeds must be non-negative");
            else
                c.seeds.push_back(static_cast<std::uint64_t>(v));
        }
    } else {
        c.seeds = r.list<std::uint64_t>(doc, "seeds", "config", {0});
    }
    c.models = r.list<std::string>(doc, "models", "config", {"qrc"});
    for (const auto& m : c.models)
        if (m != "qrc" && m != "classical" && m != "esn" && m != "persistence")
            r.issue("config.models: unknown model '" + m + "'");

    const json empty = json::object();
    const json& res = doc.contains("reservoir") ? doc["reservoir"] : empty;
    r.check_keys(res, "reservoir",
                 {"tau", "washout", "inputs", "readout", "readout_channel", "relaxation", "protocol", "engine",
                  "noise_sigma", "fid"});
    c.qrc.tau = r.list<double>(res, "tau", "reservoir", {0.3});
    if (res.contains("washout") && res["washout"].is_string()) {
        if (res["washout"].get<std::string>() != "auto")
            r.issue("reservoir.washout: expected a number, a list or \"auto\"");
    } else {
        c.qrc.washout.values = r.list<int>(res, "washout", "reservoir", {100});
    }
    if (res.contains("inputs")) {
        if (!res["inputs"].is_array())
            r.issue("reservoir.inputs: expected a list");
        else
            for (const auto& in : res["inputs"]) {
                r.check_keys(in, "reservoir.inputs[]", {"channel", "map", "tilt"});
                InputAssignment a;
                a.channel = r.get<std::string>(in, "channel", "reservoir.inputs[]", "proton");
                a.map = parse_angle_map(r.get<std::string>(in, "map", "reservoir.inputs[]", "arcsin"), r);
                a.tilt = r.get<double>(in, "tilt", "reservoir.inputs[]", 0.0);
                c.qrc.inputs.push_back(a);
            }
    } else {
        c.qrc.inputs.push_back({"proton", AngleMap::arcsin, 0.0});
    }
    c.qrc.readouts = r.list<std::string>(res, "readout", "reservoir", {"single_time"});
    for (const auto& s : c.qrc.readouts)
        if (s != "single_time" && s != "time_multiplexed" && s != "full_pauli")
            r.issue("reservoir.readout: unknown scheme '" + s + "'");
    c.qrc.readout_channel = r.get<std::string>(res, "readout_channel", "reservoir", "proton");
    c.qrc.relaxation.clear();
    for (const auto& s : r.list<std::string>(res, "relaxation", "reservoir", {"full"})) {
        try {
            c.qrc.relaxation.push_back(parse_relaxation_model(s));
        } catch (const Error& e) {
            r.issue(std::string("reservoir.relaxation: ") + e.what());
        }
    }
    const auto protocol = r.get<std::string>(res, "protocol", "reservoir", "single_pass");
    if (protocol == "single_pass")
        c.qrc.protocol = Protocol::single_pass;
    else if (protocol == "rewinding")
        c.qrc.protocol = Protocol::rewinding;
    else
        r.issue("reservoir.protocol: unknown protocol '" + protocol + "'");
    const auto engine = r.get<std::string>(res, "engine", "reservoir", "propagator");
    if (engine == "propagator")
        c.qrc.engine = EvolutionEngine::propagator;
    else if (engine == "rk4")
        c.qrc.engine = EvolutionEngine::rk4;
    else
        r.issue("reservoir.engine: unknown engine '" + engine + "'");
    c.qrc.noise_sigma = r.get<double>(res, "noise_sigma", "reservoir", 0.0);
    if (res.contains("fid")) {
        const auto& f = res["fid"];
        r.check_keys(f, "reservoir.fid", {"n_points", "dt", "half_width_hz"});
        c.qrc.fid.n_points = r.get<std::size_t>(f, "n_points", "reservoir.fid", c.qrc.fid.n_points);
        c.qrc.fid.dt = r.get<double>(f, "dt", "reservoir.fid", c.qrc.fid.dt);
        c.qrc.fid.half_width_hz = r.get<double>(f, "half_width_hz", "reservoir.fid", c.qrc.fid.half_width_hz);
    }

    const json& task = doc.contains("task") ? doc["task"] : empty;
    r.check_keys(task, "task",
                 {"type", "orders", "rescale", "sine", "train", "test", "max_delay", "trace_delays", "path",
                  "horizons", "washout"});
    const auto type = r.get<std::string>(task, "type", "task", "narma");
    if (type == "narma") {
        c.task.kind = TaskKind::narma;
        c.task.orders = int_list_or_range(r, task, "orders", "task", {2, 5, 10, 15, 20});
        c.task.rescale = r.get<bool>(task, "rescale", "task", true);
        c.task.train = r.get<Eigen::Index>(task, "train", "task", 400);
        c.task.test = r.get<Eigen::Index>(task, "test", "task", 100);
        if (task.contains("sine")) {
            const auto& s = task["sine"];
            r.check_keys(s, "task.sine", {"alpha", "beta", "gamma", "period"});
            c.task.sine.alpha = r.get<double>(s, "alpha", "task.sine", c.task.sine.alpha);
            c.task.sine.beta = r.get<double>(s, "beta", "task.sine", c.task.sine.beta);
            c.task.sine.gamma = r.get<double>(s, "gamma", "task.sine", c.task.sine.gamma);
            c.task.sine.period = r.get<double>(s, "period", "task.sine", c.task.sine.period);
        }
    } else if (type == "stm") {
        c.task.kind = TaskKind::stm;
        c.task.max_delay = r.get<int>(task, "max_delay", "task", 100);
        c.task.trace_delays = r.list<int>(task, "trace_delays", "task", c.task.trace_delays);
        c.task.train = r.get<Eigen::Index>(task, "train", "task", 3000);
        c.task.test = r.get<Eigen::Index>(task, "test", "task", 1000);
    } else if (type == "weather") {
        c.task.kind = TaskKind::weather;
        c.task.weather_path = r.get<std::string>(task, "path", "task", "");
        c.task.horizons = int_list_or_range(r, task, "horizons", "task", {1});
        c.task.weather_washout = r.get<Eigen::Index>(task, "washout", "task", 374);
        c.task.train = r.get<Eigen::Index>(task, "train", "task", 600);
        if (c.task.weather_path.empty())
            r.issue("task.path: weather task needs a CSV path");
    } else {
        r.issue("task.type: unknown task '" + type + "'");
    }

    const json& cl = doc.contains("classical") ? doc["classical"] : empty;
    r.check_keys(cl, "classical", {"readout", "polarization_scaled"});
    c.classical.readouts = r.list<std::string>(cl, "readout", "classical", c.classical.readouts);
    for (const auto& s : c.classical.readouts)
        if (s != "single_time" && s != "time_multiplexed")
            r.issue("classical.readout: unknown scheme '" + s + "'");
    c.classical.polarization_scaled = r.get<bool>(cl, "polarization_scaled", "classical", false);

    const json& esn = doc.contains("esn") ? doc["esn"] : empty;
    r.check_keys(esn, "esn", {"grid", "realizations", "washout"});
    if (esn.contains("grid")) {
        c.esn.grid.clear();
        if (!esn["grid"].is_array())
            r.issue("esn.grid: expected a list");
        else
            for (const auto& g : esn["grid"]) {
                r.check_keys(g, "esn.grid[]", {"nodes", "connectivity", "spectral_radius"});
                EsnGridPoint p;
                p.nodes = r.get<int>(g, "nodes", "esn.grid[]", p.nodes);
                p.connectivity = r.get<double>(g, "connectivity", "esn.grid[]", p.connectivity);
                p.spectral_radius = r.get<double>(g, "spectral_radius", "esn.grid[]", p.spectral_radius);
                c.esn.grid.push_back(p);
            }
    }
    c.esn.realizations = r.get<int>(esn, "realizations", "esn", c.esn.realizations);
    c.esn.washout = r.get<int>(esn, "washout", "esn", -1);

    const json& lr = doc.contains("learning") ? doc["learning"] : empty;
    r.check_keys(lr, "learning", {"lambda_grid", "folds", "fold_mode", "lambda"});
    c.learning.lambda_grid = r.list<double>(lr, "lambda_grid", "learning", default_lambda_grid());
    c.learning.folds = r.get<int>(lr, "folds", "learning", 10);
    c.learning.fixed_lambda = r.get<double>(lr, "lambda", "learning", -1.0);
    const auto fm = r.get<std::string>(lr, "fold_mode", "learning", "contiguous");
    if (fm == "contiguous")
        c.learning.fold_mode = FoldMode::contiguous;
    else if (fm == "shuffled")
        c.learning.fold_mode = FoldMode::shuffled;
    else
        r.issue("learning.fold_mode: unknown mode '" + fm + "'");

    const json& out = doc.contains("output") ? doc["output"] : empty;
    r.check_keys(out, "output", {"traces"});
    c.write_traces = r.get<bool>(out, "traces", "output", true);

    // invariants
    if (c.qrc.tau.empty())
        r.issue("reservoir.tau: grid is empty");
    for (double t : c.qrc.tau)
        if (!(t > 0.0) || !std::isfinite(t))
            r.issue("reservoir.tau: values must be positive and finite");
    const auto& wv = c.qrc.washout.values;
    if (!wv.empty() && wv.size() != 1 && wv.size() != c.qrc.tau.size())
        r.issue("reservoir.washout: give one value or one per tau");
    for (int w : wv)
        if (w < 0)
            r.issue("reservoir.washout: values must be non-negative");
    if (c.qrc.readouts.empty())
        r.issue("reservoir.readout: list is empty");
    if (c.qrc.relaxation.empty())
        r.issue("reservoir.relaxation: list is empty");
    if (c.qrc.inputs.empty())
        r.issue("reservoir.inputs: at least one input assignment is required");
    if (c.qrc.noise_sigma < 0.0)
        r.issue("reservoir.noise_sigma: must be non-negative");
    if (c.qrc.fid.n_points == 0 || !(c.qrc.fid.dt > 0.0))
        r.issue("reservoir.fid: need n_points > 0 and dt > 0");
    if (c.seeds.empty())
        r.issue("config.seeds: list is empty");
    if (c.models.empty())
        r.issue("config.models: list is empty");
    if (c.learning.lambda_grid.empty())
        r.issue("learning.lambda_grid: grid is empty");
    if (c.learning.folds < 2)
        r.issue("learning.folds: need at least 2");
    if (c.task.train < 1 || c.task.test < (c.task.kind == TaskKind::weather ? 0 : 1))
        r.issue("task: train and test lengths must be positive");
    if (c.task.kind == TaskKind::narma) {
        if (c.task.orders.empty())
            r.issue("task.orders: list is empty");
        for (int n : c.task.orders)
            if (n < 2)
                r.issue("task.orders: NARMA order " + std::to_string(n) + " is below 2");
    }
    if (c.task.kind == TaskKind::stm && c.task.max_delay < 0)
        r.issue("task.max_delay: must be non-negative");
    if (c.task.kind == TaskKind::weather) {
        if (c.task.horizons.empty())
            r.issue("task.horizons: list is empty");
        for (int h : c.task.horizons)
            if (h < 1 || h > kDefaultMaxHorizon)
                r.issue("task.horizons: horizon " + std::to_string(h) + " outside [1, 45]");
        if (c.qrc.inputs.size() != 2 && std::count(c.models.begin(), c.models.end(), "qrc") +
                                                std::count(c.models.begin(), c.models.end(), "classical") >
                                            0)
            r.issue("reservoir.inputs: the weather task needs two input assignments (temperature, humidity)");
    } else if (c.qrc.inputs.size() != 1) {
        r.issue("reservoir.inputs: scalar tasks take exactly one input assignment");
    }
    if (std::count(c.models.begin(), c.models.end(), "persistence") && c.task.kind != TaskKind::weather)
        r.issue("config.models: the persistence baseline applies to the weather task only");
    for (const auto& g : c.esn.grid) {
        EsnParams p{g.nodes, g.connectivity, g.spectral_radius, 1, 0};
        try {
            p.validate();
        } catch (const Error& e) {
            r.issue(std::string("esn.grid: ") + e.what());
        }
    }
    if (c.esn.realizations < 1)
        r.issue("esn.realizations: must be at least 1");
    return c;
}

std::string join_issues(const std::vector<std::string>& issues) {
    std::string s;
    for (const auto& i : issues)
        s += (s.empty() ? "" : "\n") + i;
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

ExperimentConfig parse_experiment(const std::string& text, const std::string& base_dir) {
    std::vector<std::string> issues;
    auto c = parse_impl(text, base_dir, issues);
    if (!issues.empty())
        throw ConfigError(join_issues(issues));
    return c;
}

ExperimentConfig load_experiment(const std::string& path) {
    const auto dir = fs::path(path).parent_path();
    return parse_experiment(read_file(path), dir.empty() ? "." : dir.string());
}

// -- cells ----------------------------------------------------------------

namespace {

std::string tau_tag(double tau) {
    std::ostringstream os;
    os << std::setprecision(6) << tau;
    return os.str();
}

} // namespace

std::vector<CellSpec> expand_cells(const ExperimentConfig& c) {
    std::vector<CellSpec> cells;
    const std::string task = c.task.kind == TaskKind::narma ? "narma" : c.task.kind == TaskKind::stm ? "stm" : "weather";
    for (const auto& model : c.models) {
        for (auto seed : c.seeds) {
            const std::string seed_tag = "/seed=" + std::to_string(seed);
            if (model == "qrc") {
                for (std::size_t t = 0; t < c.qrc.tau.size(); ++t)
                    for (const auto& ro : c.qrc.readouts)
                        for (auto rel : c.qrc.relaxation) {
                            CellSpec s;
                            s.model = model;
                            s.tau = c.qrc.tau[t];
                            s.washout = washout_for(c, t);
                            s.readout = ro;
                            s.relaxation = rel;
                            s.seed = seed;
                            s.id = task + "/qrc/tau=" + tau_tag(s.tau) + "/readout=" + ro + "/relax=" + to_string(rel) +
                                   seed_tag;
                            cells.push_back(s);
                        }
            } else if (model == "classical") {
                for (std::size_t t = 0; t < c.qrc.tau.size(); ++t)
                    for (const auto& ro : c.classical.readouts) {
                        CellSpec s;
                        s.model = model;
                        s.tau = c.qrc.tau[t];
                        s.washout = washout_for(c, t);
                        s.readout = ro;
                        s.seed = seed;
                        s.id = task + "/classical/tau=" + tau_tag(s.tau) + "/readout=" + ro + seed_tag;
                        cells.push_back(s);
                    }
            } else if (model == "esn") {
                for (const auto& g : c.esn.grid)
                    for (int rz = 0; rz < c.esn.realizations; ++rz) {
                        CellSpec s;
                        s.model = model;
                        s.esn = g;
                        s.washout = c.esn.washout >= 0 ? c.esn.washout : washout_for(c, 0);
                        s.seed = seed + static_cast<std::uint64_t>(rz);
                        s.id = task + "/esn/M=" + std::to_string(g.nodes) + "/k=" + tau_tag(g.connectivity) +
                               "/r=" + tau_tag(g.spectral_radius) + "/seed=" + std::to_string(s.seed);
                        cells.push_back(s);
                    }
            } else if (model == "persistence") {
                CellSpec s;
                s.model = model;
                s.washout = static_cast<int>(c.task.weather_washout);
                s.seed = seed;
                s.id = task + "/persistence" + seed_tag;
                cells.push_back(s);
            }
        }
    }
    return cells;
}

// -- evaluation -------------------------------------------------------------

namespace {

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& ch : out)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-' && ch != '_')
            ch = '_';
    return out;
}

double metric_value(const std::string& metric, const RVector& y, const RVector& yhat) {
    if (metric == "R2")
        return r_squared(y, yhat);
    if (metric == "NMSE")
        return nmse(y, yhat);
    if (metric == "C_td")
        return stm_capacity(y, yhat);
    throw ConfigError("unknown metric '" + metric + "'");
}

RVector slice(const RVector& v, Eigen::Index begin, Eigen::Index end) { return v.segment(begin, end - begin); }

} // namespace

void evaluate_targets(const FeatureMatrix& features, Eigen::Index first_step, const std::vector<TaskTarget>& targets,
                      const FitOptions& fit, const CellSpec& cell, CellOutput& out, bool write_traces) {
    std::map<std::array<Eigen::Index, 4>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& t = targets[i];
        if (t.train_begin < first_step || t.test_begin < first_step ||
            t.train_end - first_step > features.rows() || t.test_end - first_step > features.rows())
            throw InvariantError("target '" + t.id + "' reaches outside the feature rows");
        groups[{t.train_begin, t.train_end, t.test_begin, t.test_end}].push_back(i);
    }
    std::vector<std::vector<ResultRecord>> per_target(targets.size());
    std::vector<std::optional<Trace>> traces(targets.size());
    for (const auto& [range, members] : groups) {
        const auto [a, b, ta, tb] = range;
        const RMatrix x_train = features.middleRows(a - first_step, b - a);
        const RMatrix x_test = features.middleRows(ta - first_step, tb - ta);
        RMatrix y_train(b - a, static_cast<Eigen::Index>(members.size()));
        for (std::size_t m = 0; m < members.size(); ++m)
            y_train.col(static_cast<Eigen::Index>(m)) = slice(targets[members[m]].values, a, b);
        if (!y_train.allFinite())
            throw InvariantError("training targets contain undefined entries");
        const LinearReadout readout = fit_readout(x_train, y_train, fit);
        const RMatrix pred = readout.predict(x_test);
        for (std::size_t m = 0; m < members.size(); ++m) {
            const auto& t = targets[members[m]];
            const RVector y = slice(t.values, ta, tb);
            if (!y.allFinite())
                throw InvariantError("test targets of '" + t.id + "' contain undefined entries");
            const RVector yhat = pred.col(static_cast<Eigen::Index>(m));
            for (const auto& metric : t.metrics)
                per_target[members[m]].push_back({cell.id, t.id, metric, metric_value(metric, y, yhat), cell.seed});
            if (write_traces && t.trace) {
                Trace tr;
                tr.name = sanitize(cell.id) + "__" + sanitize(t.id);
                for (Eigen::Index k = 0; k < y.size(); ++k) {
                    tr.step.push_back(ta + k);
                    tr.y.push_back(y[k]);
                    tr.yhat.push_back(yhat[k]);
                }
                traces[members[m]] = std::move(tr);
            }
        }
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (auto& r : per_target[i])
            out.records.push_back(std::move(r));
        if (traces[i])
            out.traces.push_back(std::move(*traces[i]));
    }
}

namespace {

struct TaskData {
    InputSeries inputs;
    std::vector<TaskTarget> targets;
    RMatrix raw;   ///< weather only
};

TaskData build_task(const ExperimentConfig& c, int washout, std::uint64_t seed) {
    TaskData d;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    switch (c.task.kind) {
    case TaskKind::narma: {
        const Eigen::Index len = washout + c.task.train + c.task.test;
        const RVector s = sine_input(len, c.task.sine);
        d.inputs = c.task.rescale ? RMatrix((5.0 * s).cwiseMin(1.0)) : RMatrix(s);
        for (int n : c.task.orders) {
            TaskTarget t;
            t.id = "narma/n=" + std::to_string(n);
            t.values = narma_targets(s, n);
            t.train_begin = washout;
            t.train_end = washout + c.task.train;
            t.test_begin = t.train_end;
            t.test_end = t.test_begin + c.task.test;
            t.metrics = {"R2", "NMSE"};
            d.targets.push_back(std::move(t));
        }
        break;
    }
    case TaskKind::stm: {
        const Eigen::Index len = washout + c.task.train + c.task.test;
        if (washout < c.task.max_delay)
            throw InvariantError("STM washout must cover the largest delay");
        const RVector s = random_sequence(len, seed);
        d.inputs = RMatrix(s);
        for (int td = 0; td <= c.task.max_delay; ++td) {
            const auto st = stm_targets(s, td);
            TaskTarget t;
            t.id = "stm/td=" + std::to_string(td);
            t.values = RVector::Constant(len, nan);
            t.values.segment(st.offset, st.size()) = st.values.col(0);
            t.train_begin = washout;
            t.train_end = washout + c.task.train;
            t.test_begin = t.train_end;
            t.test_end = len;
            t.metrics = {"C_td"};
            t.trace = std::find(c.task.trace_delays.begin(), c.task.trace_delays.end(), td) != c.task.trace_delays.end();
            d.targets.push_back(std::move(t));
        }
        break;
    }
    case TaskKind::weather: {
        const auto ws = load_weather_csv(c.resolve(c.task.weather_path));
        d.raw = ws.values;
        const Eigen::Index len = ws.rows();
        const Eigen::Index fit_rows = c.task.weather_washout + c.task.train;
        if (fit_rows >= len)
            throw InvariantError("weather series is shorter than washout + train");
        const auto scaler = MinMaxScaler::fit(ws.values.topRows(fit_rows));
        d.inputs = scaler.transform(ws.values);
        const char* names[2] = {"meantemp", "humidity"};
        for (int h : c.task.horizons) {
            const auto split = SplitSpec{c.task.weather_washout, c.task.train, len - fit_rows - h};
            if (split.test < 2)
                throw InvariantError("weather series too short for horizon " + std::to_string(h));
            const auto ht = horizon_targets(ws.values, h);
            for (int ch = 0; ch < 2; ++ch) {
                TaskTarget t;
                t.id = "weather/h=" + std::to_string(h) + "/" + names[ch];
                t.values = RVector::Constant(len, nan);
                t.values.head(ht.size()) = ht.values.col(ch);
                t.train_begin = split.washout;
                t.train_end = fit_rows;
                t.test_begin = fit_rows;
                t.test_end = fit_rows + split.test;
                t.metrics = {"R2", "NMSE"};
                d.targets.push_back(std::move(t));
            }
        }
        break;
    }
    }
    return d;
}

void add_noise(FeatureMatrix& x, double sigma, std::uint64_t seed) {
    if (sigma <= 0.0)
        return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index col = 1; col < x.cols(); ++col)
            x(r, col) += noise(rng);
}

double max_polarization(const SpinSystem& s) {
    double p = 0.0;
    for (double v : s.polarizations)
        p = std::max(p, std::abs(v));
    return p > 0.0 ? p : 1.0;
}

ReservoirConfig reservoir_config(const ExperimentConfig& c, const CellSpec& cell) {
    ReservoirConfig rc;
    rc.tau = cell.tau;
    rc.inputs = c.qrc.inputs;
    rc.n_washout = cell.washout;
    rc.readout = cell.readout == "time_multiplexed" ? ReadoutScheme::time_multiplexed : ReadoutScheme::single_time;
    rc.protocol = c.qrc.protocol;
    rc.engine = c.qrc.engine;
    return rc;
}

FeatureMatrix qrc_features(const ExperimentConfig& c, const CellSpec& cell, const InputSeries& inputs) {
    const SpinSystem system = with_relaxation(load_molecule_file(c.resolve(c.molecule)), cell.relaxation);
    if (system.n_spins > c.max_spins)
        throw DimensionError("molecule has " + std::to_string(system.n_spins) + " spins, above max_spins " +
                             std::to_string(c.max_spins));
    const Reservoir reservoir(system, reservoir_config(c, cell));
    ReadoutFn readout;
    if (cell.readout == "single_time") {
        const std::string channel = c.qrc.readout_channel;
        readout = [system, channel](const DensityMatrix& rho) { return pauli_expectations(rho, system, channel); };
    } else if (cell.readout == "time_multiplexed") {
        auto sr = std::make_shared<SpectralReadout>(system, c.qrc.readout_channel, c.qrc.fid);
        readout = [sr](const DensityMatrix& rho) { return (*sr)(rho); };
    } else {
        const double scale = max_polarization(system);
        readout = [scale](const DensityMatrix& rho) { return full_pauli_expectations(rho, scale); };
    }
    return run_protocol(inputs, reservoir, readout);
}

FeatureMatrix classical_features(const ExperimentConfig& c, const CellSpec& cell, const InputSeries& inputs) {
    const SpinSystem system = load_molecule_file(c.resolve(c.molecule));
    ClassicalOptions opts;
    opts.polarization_scaled = c.classical.polarization_scaled;
    opts.engine = c.qrc.engine;
    const ClassicalReservoir reservoir(system, reservoir_config(c, cell), opts);
    ClassicalReadoutFn readout;
    if (cell.readout == "time_multiplexed") {
        auto sr = std::make_shared<ClassicalSpectralReadout>(system, c.qrc.readout_channel, c.qrc.fid);
        readout = [sr](const ClassicalSpinState& s) { return (*sr)(s); };
    } else {
        readout = classical_components;
    }
    return run_classical(inputs, reservoir, readout);
}

void persistence_records(const TaskData& d, const ExperimentConfig& c, const CellSpec& cell, CellOutput& out) {
    for (const auto& t : d.targets) {
        const int ch = t.id.find("humidity") != std::string::npos ? 1 : 0;
        const RVector y = t.values.segment(t.test_begin, t.test_end - t.test_begin);
        const RVector yhat = d.raw.col(ch).segment(t.test_begin, t.test_end - t.test_begin);
        for (const auto& m : t.metrics)
            out.records.push_back({cell.id, t.id, m, metric_value(m, y, yhat), cell.seed});
        if (c.write_traces) {
            Trace tr;
            tr.name = sanitize(cell.id) + "__" + sanitize(t.id);
            for (Eigen::Index k = 0; k < y.size(); ++k) {
                tr.step.push_back(t.test_begin + k);
                tr.y.push_back(y[k]);
                tr.yhat.push_back(yhat[k]);
            }
            out.traces.push_back(std::move(tr));
        }
    }
}

} // namespace

CellOutput run_cell(const ExperimentConfig& c, const CellSpec& cell) {
    CellOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const TaskData d = build_task(c, cell.washout, c.seeds.empty() ? cell.seed : cell.seed);
        if (cell.model == "persistence") {
            persistence_records(d, c, cell, out);
        } else {
            FeatureMatrix x;
            if (cell.model == "qrc")
                x = qrc_features(c, cell, d.inputs);
            else if (cell.model == "classical")
                x = classical_features(c, cell, d.inputs);
            else if (cell.model == "esn") {
                EsnParams p{cell.esn.nodes, cell.esn.connectivity, cell.esn.spectral_radius,
                            static_cast<int>(d.inputs.cols()), cell.seed};
                x = esn_run(d.inputs, esn_init(p), cell.washout);
            } else {
                throw ConfigError("unknown model '" + cell.model + "'");
            }
            if (cell.model != "esn")
                add_noise(x, c.qrc.noise_sigma, fnv1a64(cell.id) ^ cell.seed);
            FitOptions fit = c.learning;
            fit.seed = cell.seed;
            evaluate_targets(x, cell.washout, d.targets, fit, cell, out, c.write_traces);
            if (c.task.kind == TaskKind::stm) {
                std::vector<double> caps;
                for (const auto& r : out.records)
                    if (r.metric == "C_td")
                        caps.push_back(r.value);
                out.records.push_back({cell.id, "stm", "C_STM", stm_total(caps), cell.seed});
            }
        }
        for (const auto& r : out.records)
            if (!std::isfinite(r.value))
                throw NumericalError("metric " + r.metric + " of " + r.task_id + " is not finite");
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        out.records.clear();
        out.traces.clear();
    }
    out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// -- run / validate ---------------------------------------------------------

namespace {

std::string output_directory(const ExperimentConfig& c, const RunOptions& o) {
    fs::path dir(c.output_dir);
    if (dir.is_absolute())
        return dir.string();
    std::string root = o.output_root;
    if (root.empty())
        if (const char* env = std::getenv("QRC_OUTPUT_ROOT"))
            root = env;
    if (root.empty())
        root = ".";
    return (fs::path(root) / dir).lexically_normal().string();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char ch : s)
        out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f)
        throw Error("cannot write '" + path.string() + "'");
    f << text;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

} // namespace

RunSummary run_experiment(ExperimentConfig config, const RunOptions& options) {
    if (options.seed_override)
        config.seeds = {*options.seed_override};
    std::vector<CellSpec> cells = expand_cells(config);
    if (!options.only.empty()) {
        std::vector<CellSpec> picked;
        for (const auto& cspec : cells)
            if (cspec.id == options.only)
                picked.push_back(cspec);
        if (picked.empty())
            throw ConfigError("no cell with id '" + options.only + "'");
        cells = std::move(picked);
    }
    std::vector<CellOutput> outputs(cells.size());
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(cells.size())));
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cells.size();)
            outputs[i] = run_cell(config, cells[i]);
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w)
        pool.emplace_back(work);
    work();
    for (auto& t : pool)
        t.join();

    RunSummary summary;
    summary.cells = cells.size();
    summary.output_dir = output_directory(config, options);
    const fs::path dir(summary.output_dir);
    fs::create_directories(dir);
    if (config.write_traces)
        fs::create_directories(dir / "traces");

    std::ostringstream results, timings;
    results << "cell_id,task_id,metric,value,seed\n";
    timings << "cell_id,status,runtime_s\n";
    json manifest;
    manifest["name"] = config.name;
    manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a64(config.canonical));
    manifest["seeds"] = config.seeds;
    manifest["only"] = options.only;
    manifest["versions"] = {{"qrc", QRC_VERSION},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"fftw", std::string(fftw_version)},
                            {"compiler", std::string(__VERSION__)}};
    json cell_list = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& o = outputs[i];
        for (const auto& r : o.records)
            results << csv_escape(r.cell_id) << ',' << csv_escape(r.task_id) << ',' << r.metric << ','
                    << format_double(r.value) << ',' << r.seed << '\n';
        timings << csv_escape(cells[i].id) << ',' << (o.ok ? "ok" : "failed") << ',' << format_double(o.runtime_s)
                << '\n';
        json entry = {{"id", cells[i].id}, {"status", o.ok ? "ok" : "failed"}, {"records", o.records.size()}};
        if (!o.ok) {
            entry["error"] = o.error;
            ++summary.failed;
        }
        cell_list.push_back(entry);
        for (const auto& tr : o.traces) {
            std::ostringstream t;
            t << "k,y,yhat\n";
            for (std::size_t k = 0; k < tr.step.size(); ++k)
                t << tr.step[k] << ',' << format_double(tr.y[k]) << ',' << format_double(tr.yhat[k]) << '\n';
            write_text(dir / "traces" / (tr.name + ".csv"), t.str());
        }
    }
    manifest["cells"] = cell_list;
    manifest["failed_cells"] = summary.failed;
    write_text(dir / "results.csv", results.str());
    write_text(dir / "timings.csv", timings.str());
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return summary;
}

ValidationReport validate_experiment_text(const std::string& text, const std::string& base_dir) {
    ValidationReport rep;
    const ExperimentConfig c = parse_impl(text, base_dir, rep.issues);
    if (!rep.issues.empty())
        return rep;
    std::optional<SpinSystem> system;
    try {
        const auto path = c.resolve(c.molecule);
        if (path.rfind("builtin:", 0) != 0 && !fs::exists(path))
            rep.issues.push_back("molecule file not found: " + path);
        else
            system = load_molecule_file(path);
    } catch (const Error& e) {
        rep.issues.push_back(std::string("molecule: ") + e.what());
    }
    if (system) {
        if (system->n_spins > c.max_spins)
            rep.issues.push_back("molecule has " + std::to_string(system->n_spins) + " spins, above max_spins " +
                                 std::to_string(c.max_spins));
        for (const auto& in : c.qrc.inputs)
            if (!system->has_channel(in.channel))
                rep.issues.push_back("input channel '" + in.channel + "' does not exist in the molecule");
        if (!system->has_channel(c.qrc.readout_channel))
            rep.issues.push_back("readout channel '" + c.qrc.readout_channel + "' does not exist in the molecule");
    }
    Eigen::Index weather_len = 0;
    if (c.task.kind == TaskKind::weather) {
        const auto path = c.resolve(c.task.weather_path);
        if (!fs::exists(path)) {
            rep.issues.push_back("weather file not found: " + path);
        } else {
            try {
                weather_len = load_weather_csv(path).rows();
                for (int h : c.task.horizons)
                    if (weather_len - c.task.weather_washout - c.task.train - h < 2)
                        rep.issues.push_back("weather series too short for horizon " + std::to_string(h));
            } catch (const Error& e) {
                rep.issues.push_back(e.what());
            }
        }
    }
    const auto cells = expand_cells(c);
    rep.cells = cells.size();
    for (const auto& cell : cells) {
        if (cell.model != "qrc" && cell.model != "classical")
            continue;
        Eigen::Index len;
        if (c.task.kind == TaskKind::weather)
            len = weather_len;
        else
            len = cell.washout + c.task.train + c.task.test;
        if (c.task.kind == TaskKind::stm && cell.washout < c.task.max_delay)
            rep.issues.push_back("cell " + cell.id + ": washout is shorter than the largest delay");
        const Protocol p = cell.model == "qrc" ? c.qrc.protocol : Protocol::single_pass;
        rep.evolve_calls += protocol_cost(p, static_cast<std::size_t>(std::max<Eigen::Index>(len, 0)), cell.washout);
    }
    rep.expensive = rep.evolve_calls > kExpensiveEvolveCalls;
    return rep;
}

ValidationReport validate_experiment(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        ValidationReport rep;
        rep.issues.push_back(e.what());
        return rep;
    }
    const auto dir = fs::path(path).parent_path();
    return validate_experiment_text(text, dir.empty() ? "." : dir.string());
}

} // namespace qrc
