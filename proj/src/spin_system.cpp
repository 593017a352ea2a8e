#include "qrc/spin_system.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qrc {

namespace {

using nlohmann::json;

constexpr std::string_view kDiethylFluoromalonate = R"({
  "name": "diethyl fluoromalonate",
  "n_spins": 3,
  "labels": ["C", "H", "F"],
  "nuclei": ["C", "H", "F"],
  "frequencies_hz": [79.8, 201.0, 157.2],
  "couplings_hz": [160.6, -194.3, 48.0],
  "t1_s": [2.9, 2.8, 3.1],
  "t2_s": [0.203, 0.236, 0.200],
  "channels": {"carbon": [0], "proton": [1], "fluorine": [2]}
})";

const std::set<std::string> kKnownKeys = {
    "name", "n_spins", "labels", "nuclei", "frequencies_hz", "couplings_hz",
    "t1_s", "t2_s", "polarizations", "groups", "channels",
};

std::string spin_name(const SpinSystem& s, int i) {
    if (i >= 0 && i < static_cast<int>(s.labels.size()) && !s.labels[i].empty())
        return "spin " + std::to_string(i) + " (" + s.labels[i] + ")";
    return "spin " + std::to_string(i);
}

double parse_time(const json& v, const std::string& key, std::size_t i) {
    if (v.is_null())
        return kInfinity;
    if (v.is_string()) {
        auto s = v.get<std::string>();
        std::transform(s.begin(), s.end(), s.begin(), ::tolower);
        if (s == "inf" || s == "infinity")
            return kInfinity;
        throw ConfigError(key + "[" + std::to_string(i) + "]: expected a number or \"inf\", got \"" + s + "\"");
    }
    if (!v.is_number())
        throw ConfigError(key + "[" + std::to_string(i) + "]: expected a number");
    return v.get<double>();
}

std::vector<double> number_list(const json& doc, const std::string& key, std::size_t expected,
                                bool times = false) {
    if (!doc.contains(key))
        throw ConfigError("missing key '" + key + "'");
    const auto& arr = doc.at(key);
    if (!arr.is_array())
        throw ConfigError("'" + key + "' must be an array");
    if (arr.size() != expected)
        throw ConfigError("'" + key + "' has " + std::to_string(arr.size()) + " entries, expected " +
                          std::to_string(expected));
    std::vector<double> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (times) {
            out.push_back(parse_time(arr[i], key, i));
        } else {
            if (!arr[i].is_number())
                throw ConfigError(key + "[" + std::to_string(i) + "]: expected a number");
            out.push_back(arr[i].get<double>());
        }
    }
    return out;
}

std::vector<SpinGroup> parse_groups(const json& doc, const std::string& key) {
    std::vector<SpinGroup> groups;
    if (!doc.contains(key))
        return groups;
    const auto& obj = doc.at(key);
    if (!obj.is_object())
        throw ConfigError("'" + key + "' must be an object of name -> list of spin indices");
    for (const auto& [name, members] : obj.items()) {
        if (!members.is_array())
            throw ConfigError(key + "." + name + ": expected a list of spin indices");
        SpinGroup g{name, {}};
        for (const auto& m : members) {
            if (!m.is_number_integer())
                throw ConfigError(key + "." + name + ": spin indices must be integers");
            g.spins.push_back(m.get<int>());
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::string channel_name_for(const std::string& nucleus) {
    if (nucleus == "H" || nucleus == "1H")
        return "proton";
    if (nucleus == "C" || nucleus == "13C")
        return "carbon";
    if (nucleus == "F" || nucleus == "19F")
        return "fluorine";
    if (nucleus == "N" || nucleus == "15N")
        return "nitrogen";
    if (nucleus == "P" || nucleus == "31P")
        return "phosphorus";
    return nucleus;
}

} // namespace

double default_polarization(std::string_view nucleus) {
    if (nucleus == "C" || nucleus == "13C")
        return 1.0e-4;
    if (nucleus == "H" || nucleus == "1H")
        return 3.98e-4;
    if (nucleus == "F" || nucleus == "19F")
        return 3.74e-4;
    return std::nan("");
}

void SpinSystem::validate() const {
    if (n_spins <= 0)
        throw InvariantError("n_spins must be positive");
    const auto n = static_cast<std::size_t>(n_spins);
    auto check_size = [&](std::size_t got, const char* what) {
        if (got != n)
            throw InvariantError(std::string(what) + " has " + std::to_string(got) + " entries for " +
                                 std::to_string(n) + " spins");
    };
    check_size(frequencies_hz.size(), "frequencies");
    check_size(t1_s.size(), "t1");
    check_size(t2_s.size(), "t2");
    check_size(polarizations.size(), "polarizations");
    if (couplings_hz.rows() != n_spins || couplings_hz.cols() != n_spins)
        throw InvariantError("coupling table must be N x N");

    for (int i = 0; i < n_spins; ++i) {
        if (!std::isfinite(frequencies_hz[i]))
            throw InvariantError(spin_name(*this, i) + ": frequency must be finite");
        if (couplings_hz(i, i) != 0.0)
            throw InvariantError(spin_name(*this, i) + ": self-coupling must be zero");
        for (int j = i + 1; j < n_spins; ++j) {
            if (!std::isfinite(couplings_hz(i, j)) || couplings_hz(i, j) != couplings_hz(j, i))
                throw InvariantError("coupling between " + spin_name(*this, i) + " and " + spin_name(*this, j) +
                                     " must be finite and symmetric");
        }
        const double t1 = t1_s[i];
        const double t2 = t2_s[i];
        if (std::isnan(t1) || t1 <= 0.0)
            throw InvariantError(spin_name(*this, i) + ": T1 must be positive or infinite");
        if (std::isnan(t2) || t2 <= 0.0)
            throw InvariantError(spin_name(*this, i) + ": T2 must be positive or infinite");
        if (std::isfinite(t1) && t2 > 2.0 * t1)
            throw InvariantError(spin_name(*this, i) + ": T2 = " + std::to_string(t2) + " s exceeds 2*T1 = " +
                                 std::to_string(2.0 * t1) + " s, which implies a negative dephasing rate");
        if (!(polarizations[i] >= -1.0 && polarizations[i] <= 1.0))
            throw InvariantError(spin_name(*this, i) + ": polarization must lie in [-1, 1]");
    }

    auto check_indices = [&](const std::vector<SpinGroup>& groups, const char* what) {
        for (const auto& g : groups) {
            if (g.spins.empty())
                throw InvariantError(std::string(what) + " '" + g.name + "' is empty");
            std::set<int> seen;
            for (int s : g.spins) {
                if (s < 0 || s >= n_spins)
                    throw InvariantError(std::string(what) + " '" + g.name + "' references unknown spin index " +
                                         std::to_string(s));
                if (!seen.insert(s).second)
                    throw InvariantError(std::string(what) + " '" + g.name + "' lists spin " + std::to_string(s) +
                                         " twice");
            }
        }
    };
    check_indices(equivalence_groups, "group");
    check_indices(channels, "channel");

    std::set<int> grouped;
    for (const auto& g : equivalence_groups)
        for (int s : g.spins)
            if (!grouped.insert(s).second)
                throw InvariantError("spin " + std::to_string(s) + " belongs to more than one equivalence group");
}

bool SpinSystem::has_channel(std::string_view name) const {
    return std::any_of(channels.begin(), channels.end(), [&](const SpinGroup& g) { return g.name == name; });
}

const std::vector<int>& SpinSystem::channel(std::string_view name) const {
    for (const auto& g : channels)
        if (g.name == name)
            return g.spins;
    throw ConfigError("unknown channel '" + std::string(name) + "'");
}

std::vector<SpinGroup> SpinSystem::readout_groups(std::string_view channel_name) const {
    const auto& members = channel(channel_name);
    std::set<int> in_channel(members.begin(), members.end());
    std::set<int> covered;
    std::vector<SpinGroup> out;
    for (const auto& g : equivalence_groups) {
        SpinGroup restricted{g.name, {}};
        for (int s : g.spins)
            if (in_channel.count(s))
                restricted.spins.push_back(s);
        if (!restricted.spins.empty()) {
            covered.insert(restricted.spins.begin(), restricted.spins.end());
            out.push_back(std::move(restricted));
        }
    }
    for (int s : members) {
        if (!covered.count(s)) {
            std::string name = (s < static_cast<int>(labels.size()) && !labels[s].empty()) ? labels[s]
                                                                                           : "spin" + std::to_string(s);
            out.push_back({name, {s}});
        }
    }
    std::sort(out.begin(), out.end(), [](const SpinGroup& a, const SpinGroup& b) {
        return *std::min_element(a.spins.begin(), a.spins.end()) < *std::min_element(b.spins.begin(), b.spins.end());
    });
    return out;
}

double SpinSystem::pure_dephasing_rate(int spin) const {
    const double r2 = std::isfinite(t2_s[spin]) ? 1.0 / t2_s[spin] : 0.0;
    const double r1 = std::isfinite(t1_s[spin]) ? 1.0 / t1_s[spin] : 0.0;
    const double rate = r2 - 0.5 * r1;
    // T2 == 2 T1 cancels exactly in exact arithmetic; clamp rounding residue.
    return rate <= 1e-15 * std::max(r2, 1.0) ? 0.0 : rate;
}

SpinSystem load_molecule(std::string_view config_text) {
    json doc;
    try {
        doc = json::parse(config_text.begin(), config_text.end(), nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("molecule parse error: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("molecule description must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!kKnownKeys.count(key))
            throw ConfigError("unknown key '" + key + "' in molecule description");
    }
    if (!doc.contains("n_spins") || !doc["n_spins"].is_number_integer())
        throw ConfigError("'n_spins' must be an integer");

    SpinSystem s;
    s.name = doc.value("name", std::string{});
    s.n_spins = doc["n_spins"].get<int>();
    if (s.n_spins <= 0)
        throw InvariantError("n_spins must be positive");
    const auto n = static_cast<std::size_t>(s.n_spins);

    if (doc.contains("labels"))
        s.labels = doc["labels"].get<std::vector<std::string>>();
    else
        for (std::size_t i = 0; i < n; ++i)
            s.labels.push_back("S" + std::to_string(i));
    if (s.labels.size() != n)
        throw ConfigError("'labels' must have n_spins entries");
    if (doc.contains("nuclei")) {
        s.nuclei = doc["nuclei"].get<std::vector<std::string>>();
        if (s.nuclei.size() != n)
            throw ConfigError("'nuclei' must have n_spins entries");
    }

    s.frequencies_hz = number_list(doc, "frequencies_hz", n);
    const auto upper = number_list(doc, "couplings_hz", n * (n - 1) / 2);
    s.couplings_hz = RMatrix::Zero(s.n_spins, s.n_spins);
    std::size_t k = 0;
    for (int i = 0; i < s.n_spins; ++i)
        for (int j = i + 1; j < s.n_spins; ++j, ++k)
            s.couplings_hz(i, j) = s.couplings_hz(j, i) = upper[k];
    s.t1_s = number_list(doc, "t1_s", n, true);
    s.t2_s = number_list(doc, "t2_s", n, true);

    if (doc.contains("polarizations")) {
        s.polarizations = number_list(doc, "polarizations", n);
    } else {
        if (s.nuclei.empty())
            throw ConfigError("'polarizations' missing and no 'nuclei' given to derive defaults");
        for (std::size_t i = 0; i < n; ++i) {
            const double p = default_polarization(s.nuclei[i]);
            if (std::isnan(p))
                throw ConfigError("no default polarization for nucleus '" + s.nuclei[i] + "' (spin " +
                                  std::to_string(i) + "); give 'polarizations' explicitly");
            s.polarizations.push_back(p);
        }
    }

    s.equivalence_groups = parse_groups(doc, "groups");
    s.channels = parse_groups(doc, "channels");
    if (!doc.contains("channels") && !s.nuclei.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto name = channel_name_for(s.nuclei[i]);
            auto it = std::find_if(s.channels.begin(), s.channels.end(),
                                   [&](const SpinGroup& g) { return g.name == name; });
            if (it == s.channels.end())
                s.channels.push_back({name, {static_cast<int>(i)}});
            else
                it->spins.push_back(static_cast<int>(i));
        }
    }
    if (!s.has_channel("all")) {
        SpinGroup all{"all", {}};
        for (int i = 0; i < s.n_spins; ++i)
            all.spins.push_back(i);
        s.channels.push_back(std::move(all));
    }
    s.validate();
    return s;
}

std::vector<std::string> builtin_molecule_names() { return {"diethyl_fluoromalonate"}; }

std::string builtin_molecule_text(std::string_view name) {
    if (name == "diethyl_fluoromalonate")
        return std::string(kDiethylFluoromalonate);
    throw ConfigError("unknown builtin molecule '" + std::string(name) + "'");
}

SpinSystem load_molecule_file(const std::string& path) {
    constexpr std::string_view prefix = "builtin:";
    if (path.rfind(prefix, 0) == 0)
        return load_molecule(builtin_molecule_text(std::string_view(path).substr(prefix.size())));
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open molecule file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return load_molecule(buf.str());
}

SpinSystem diethyl_fluoromalonate() { return load_molecule(kDiethylFluoromalonate); }

RelaxationModel parse_relaxation_model(std::string_view text) {
    if (text == "full" || text == "AD&PD" || text == "ad_pd")
        return RelaxationModel::full;
    if (text == "amplitude_only" || text == "AD" || text == "ad")
        return RelaxationModel::amplitude_only;
    if (text == "dephasing_only" || text == "PD" || text == "pd")
        return RelaxationModel::dephasing_only;
    if (text == "none" || text == "U" || text == "unitary")
        return RelaxationModel::none;
    throw ConfigError("unknown relaxation model '" + std::string(text) + "'");
}

std::string to_string(RelaxationModel model) {
    switch (model) {
    case RelaxationModel::full:
        return "ad_pd";
    case RelaxationModel::amplitude_only:
        return "ad";
    case RelaxationModel::dephasing_only:
        return "pd";
    case RelaxationModel::none:
        return "unitary";
    }
    return "?";
}

SpinSystem with_relaxation(const SpinSystem& system, RelaxationModel model) {
    SpinSystem out = system;
    for (int i = 0; i < out.n_spins; ++i) {
        switch (model) {
        case RelaxationModel::full:
            break;
        case RelaxationModel::amplitude_only:
            // T_phi -> infinity: coherences decay at 1/(2 T1) only.
            out.t2_s[i] = std::isfinite(out.t1_s[i]) ? 2.0 * out.t1_s[i] : kInfinity;
            break;
        case RelaxationModel::dephasing_only:
            out.t1_s[i] = kInfinity;
            break;
        case RelaxationModel::none:
            out.t1_s[i] = kInfinity;
            out.t2_s[i] = kInfinity;
            break;
        }
    }
    return out;
}

DiagonalHamiltonian build_hamiltonian(const SpinSystem& system, int max_spins) {
    if (system.n_spins > max_spins)
        throw DimensionError("system has " + std::to_string(system.n_spins) + " spins, above the cap of " +
                             std::to_string(max_spins));
    const int n = system.n_spins;
    const std::size_t d = system.dim();
    DiagonalHamiltonian h;
    h.energies.assign(d, 0.0);
    for (std::size_t b = 0; b < d; ++b) {
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            const int si = spin_sign(b, i, n);
            e += M_PI * system.frequencies_hz[i] * si;
            for (int j = i + 1; j < n; ++j)
                e += 0.5 * M_PI * system.couplings_hz(i, j) * si * spin_sign(b, j, n);
        }
        h.energies[b] = e;
    }
    return h;
}

std::vector<CollapseOperator> collapse_operators(const SpinSystem& system) {
    std::vector<CollapseOperator> ops;
    for (int i = 0; i < system.n_spins; ++i) {
        const double t1 = system.t1_s[i];
        const double p = system.polarizations[i];
        if (std::isfinite(t1)) {
            const double up = (1.0 - p) / (2.0 * t1);
            const double down = (1.0 + p) / (2.0 * t1);
            if (up > 0.0)
                ops.push_back({i, CollapseKind::raising, std::sqrt(up)});
            if (down > 0.0)
                ops.push_back({i, CollapseKind::lowering, std::sqrt(down)});
        }
        const double dephasing = system.pure_dephasing_rate(i);
        if (dephasing > 0.0)
            ops.push_back({i, CollapseKind::dephasing, std::sqrt(0.5 * dephasing)});
    }
    return ops;
}

} // namespace qrc
