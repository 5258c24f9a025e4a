#include "fsnids/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fsnids/error.hpp"

namespace fsnids {

namespace {

constexpr std::string_view truth_header = "FSNIDS-SYNTH v1";

template <class T>
std::size_t pick_index(const std::vector<weighted<T>>& options, std::mt19937_64& rng) {
    double total = 0;
    for (const auto& o : options) total += o.weight;
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (u < options[i].weight) return i;
        u -= options[i].weight;
    }
    return options.size() - 1;
}

double uniform_int(const value_range& r, std::mt19937_64& rng) {
    const auto lo = static_cast<long long>(std::ceil(r.lo));
    const auto hi = static_cast<long long>(std::floor(r.hi));
    return static_cast<double>(std::uniform_int_distribution<long long>(lo, hi)(rng));
}

// Millisecond resolution, as NetFlow exports print it; the result stays
// inside the range.
double uniform_duration(const value_range& r, std::mt19937_64& rng) {
    const auto lo = static_cast<long long>(std::ceil(r.lo * 1000.0 - 1e-9));
    const auto hi = static_cast<long long>(std::floor(r.hi * 1000.0 + 1e-9));
    return static_cast<double>(std::uniform_int_distribution<long long>(lo, hi)(rng)) / 1000.0;
}

// Alternatives fixed for one occurrence of a template; a burst repeats them.
struct template_draw {
    std::size_t proto = 0, duration = 0, src_port = 0, dst_port = 0, packets = 0, bytes = 0, flags = 0;
};

template_draw draw_alternatives(const flow_template& t, std::mt19937_64& rng) {
    template_draw d;
    d.proto = pick_index(t.proto, rng);
    d.duration = pick_index(t.duration, rng);
    d.src_port = pick_index(t.src_port, rng);
    d.dst_port = pick_index(t.dst_port, rng);
    d.packets = pick_index(t.packets, rng);
    d.bytes = pick_index(t.bytes, rng);
    d.flags = pick_index(t.flags, rng);
    return d;
}

raw_flow_record draw_flow(const flow_template& t, const template_draw& d, double src_port, std::mt19937_64& rng) {
    raw_flow_record r;
    r.proto = t.proto[d.proto].value;
    r.duration = uniform_duration(t.duration[d.duration].value, rng);
    r.src_pt = src_port;
    r.dst_pt = uniform_int(t.dst_port[d.dst_port].value, rng);
    r.packets = static_cast<std::uint64_t>(uniform_int(t.packets[d.packets].value, rng));
    r.bytes = static_cast<std::uint64_t>(uniform_int(t.bytes[d.bytes].value, rng));
    r.flags = parse_flags(t.flags[d.flags].value);
    return r;
}

struct unit {
    std::size_t pattern = 0;
    std::size_t length = 1;
};

bool is_benign_kind(pattern_kind k) { return k != pattern_kind::attack_burst; }

// Splits `count` flows into burst lengths within [lo, hi]. Only the last
// piece may exceed hi when the range cannot tile count exactly.
std::vector<std::size_t> split_bursts(std::size_t count, std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
    std::vector<std::size_t> out;
    std::size_t remaining = count;
    while (remaining > 0) {
        std::size_t len;
        if (remaining <= hi) {
            len = remaining;
        } else {
            const std::size_t top = std::min(hi, remaining - lo);
            len = top < lo ? remaining : std::uniform_int_distribution<std::size_t>(lo, top)(rng);
        }
        out.push_back(len);
        remaining -= len;
    }
    return out;
}

// Largest-remainder split of total over n buckets, as even as possible.
std::vector<std::size_t> even_split(std::size_t total, std::size_t n) {
    std::vector<std::size_t> out(n, n ? total / n : 0);
    for (std::size_t i = 0; i < (n ? total % n : 0); ++i) ++out[i];
    return out;
}

flow_template make_template(std::string name, std::vector<weighted<std::string>> proto,
                            std::vector<weighted<value_range>> duration, std::vector<weighted<value_range>> src_port,
                            std::vector<weighted<value_range>> dst_port, std::vector<weighted<value_range>> packets,
                            std::vector<weighted<value_range>> bytes, std::vector<weighted<std::string>> flags) {
    flow_template t;
    t.name = std::move(name);
    t.proto = std::move(proto);
    t.duration = std::move(duration);
    t.src_port = std::move(src_port);
    t.dst_port = std::move(dst_port);
    t.packets = std::move(packets);
    t.bytes = std::move(bytes);
    t.flags = std::move(flags);
    return t;
}

}  // namespace

std::string_view to_string(pattern_kind k) {
    switch (k) {
    case pattern_kind::attack_burst:
        return "attack_burst";
    case pattern_kind::isolated_service:
        return "isolated_service";
    case pattern_kind::background_noise:
        return "background_noise";
    }
    return "unknown";
}

pattern_kind pattern_kind_from_string(std::string_view s) {
    if (s == "attack_burst") return pattern_kind::attack_burst;
    if (s == "isolated_service") return pattern_kind::isolated_service;
    if (s == "background_noise") return pattern_kind::background_noise;
    throw parse_error("unknown pattern kind '" + std::string(s) + "'");
}

raw_flow_record flow_template::prototype() const {
    raw_flow_record r;
    auto mid = [](const value_range& v) { return std::floor((v.lo + v.hi) / 2); };
    r.proto = proto.at(0).value;
    r.duration = (duration.at(0).value.lo + duration.at(0).value.hi) / 2;
    r.src_pt = mid(src_port.at(0).value);
    r.dst_pt = mid(dst_port.at(0).value);
    r.packets = static_cast<std::uint64_t>(mid(packets.at(0).value));
    r.bytes = static_cast<std::uint64_t>(mid(bytes.at(0).value));
    r.flags = parse_flags(flags.at(0).value);
    return r;
}

void pattern_spec::validate() const {
    const auto& t = feature_template;
    if (kind == pattern_kind::attack_burst) {
        if (label != binary_label::malicious)
            throw config_error("attack burst pattern '" + t.name + "' must be labeled malicious");
        if (min_burst < 3) throw config_error("attack burst pattern '" + t.name + "' needs bursts of at least 3");
    } else {
        if (label != binary_label::benign)
            throw config_error(std::string(to_string(kind)) + " pattern '" + t.name + "' must be labeled benign");
        if (min_burst != 1 || max_burst != 1)
            throw config_error(std::string(to_string(kind)) + " pattern '" + t.name + "' occurs singly");
    }
    if (max_burst < min_burst) throw config_error("pattern '" + t.name + "' has max_burst below min_burst");
    if (t.proto.empty() || t.duration.empty() || t.src_port.empty() || t.dst_port.empty() || t.packets.empty() || t.bytes.empty() ||
        t.flags.empty())
        throw config_error("template '" + t.name + "' leaves a field without alternatives");
    auto check = [&](const value_range& r, const char* field) {
        if (!(r.lo >= 0) || !(r.hi >= r.lo))
            throw config_error("template '" + t.name + "' has an invalid " + field + " range");
    };
    for (const auto& o : t.src_port) check(o.value, "src_port");
    for (const auto& o : t.duration) check(o.value, "duration");
    for (const auto& o : t.dst_port) check(o.value, "dst_port");
    for (const auto& o : t.packets) check(o.value, "packets");
    for (const auto& o : t.bytes) check(o.value, "bytes");
    for (const auto& f : t.flags) parse_flags(f.value);
}

void synth_config::validate() const {
    if (total_flows < 1) throw config_error("total_flows must be at least 1");
    if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0))
        throw config_error("ambiguous_fraction must lie in [0, 1]");
    const double sum = mix.attack_burst + mix.isolated_service + mix.background_noise;
    if (mix.attack_burst < 0 || mix.isolated_service < 0 || mix.background_noise < 0 || std::abs(sum - 1.0) > 1e-9)
        throw config_error("pattern mix weights must be non-negative and sum to 1");
    if (phase_min < 1 || phase_max < phase_min) throw config_error("phase length range is empty");
    if (!(domain.byte_scale >= 0)) throw config_error("byte scale must be non-negative");
    if (!(cue_strength >= 0.5 && cue_strength <= 1.0)) throw config_error("cue_strength must lie in [0.5, 1]");
    if (!(shifted_cue_strength >= 0.5 && shifted_cue_strength <= 1.0))
        throw config_error("shifted_cue_strength must lie in [0.5, 1]");
}

synth_config synth_config::balanced(std::size_t total_flows, double ambiguous_fraction, std::uint64_t seed) {
    synth_config c;
    c.total_flows = total_flows;
    c.ambiguous_fraction = ambiguous_fraction;
    c.seed = seed;
    c.mix.attack_burst = 0.5;
    c.mix.isolated_service = ambiguous_fraction / 2;
    c.mix.background_noise = 0.5 - ambiguous_fraction / 2;
    return c;
}

std::vector<std::uint8_t> synthetic_corpus::ambiguous_mask() const {
    std::vector<std::uint8_t> m(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) m[i] = truth[i].ambiguous ? 1 : 0;
    return m;
}

// Shared families each sit on one token tuple whose bins a x4 byte scale or
// a +3000 port offset does not move. Background and attack-only flows are
// drawn from one pool of values with opposite skews, so a single flow is
// only weak evidence of its class; a few hundred of them make a stretch of
// traffic unmistakable.
std::vector<pattern_spec> default_patterns(std::size_t shared_template_count, double cue_strength,
                                           double shifted_cue_strength) {
    const value_range low_ports{1025, 36000}, high_ports{40001, 56000};
    // Every combination below is a distinct token tuple; byte ranges map
    // into a single bin both before and after a x4 scale.
    const std::vector<double> service_ports = {21, 22, 23, 25, 53, 110, 143, 445, 3306, 3389, 5900, 8080};
    const std::vector<std::string> shared_flags = {".AP.SF", "....S.", ".A..S.", ".AP..."};
    const std::vector<value_range> shared_bytes = {{5001, 9000}, {12000, 30000}, {40000, 90000}, {100000, 400000}};
    const std::vector<value_range> shared_durations = {{0.0, 0.0}, {1.5, 9.5}, {11, 99}};
    const std::vector<value_range> shared_packets = {{1, 2}, {11, 19}, {21, 60}};
    std::vector<flow_template> ambiguous;
    for (std::size_t k = 0; k < shared_template_count; ++k) {
        const double port = service_ports[k % service_ports.size()];
        const std::size_t j = k / service_ports.size();
        ambiguous.push_back(make_template(
            "shared-" + std::to_string(static_cast<int>(port)) + "-" + std::to_string(j), {{"TCP"}},
            {{shared_durations[(k + j) % shared_durations.size()]}}, {{(k % 2) ? high_ports : low_ports}},
            {{{port, port}}}, {{shared_packets[(k + 2 * j) % shared_packets.size()]}},
            {{shared_bytes[j % shared_bytes.size()]}}, {{shared_flags[(j + k) % shared_flags.size()]}}));
    }

    const double p = cue_strength;
    auto skew = [p](auto a, auto b) {
        using T = decltype(a);
        return std::vector<weighted<T>>{{a, p}, {b, 1 - p}};
    };
    const std::string tcp = "TCP", udp = "UDP", fin = ".AP.SF", nofin = ".AP.S.";
    const value_range dur_short{0.011, 0.04}, dur_long{0.041, 1.0};
    const value_range http{80, 80}, https{443, 443};
    const value_range five{5, 5}, six{6, 6};
    // Byte and port bins form chains under bytes x4 and ports +3000: a
    // background bin maps into an attack-only bin and the reverse, so the
    // shift turns these two cues against the flow's class.
    //   bytes: (50,60] -> (200,300] -> (700,1000] -> (1000,5000]
    //   ports: (37000,40000] -> (40000,60000], (57000,60000] -> (60000,)
    const double q = shifted_cue_strength;
    const std::vector<weighted<value_range>> bg_bytes = {
        {{51, 60}, q / 2}, {{801, 1000}, q / 2}, {{201, 250}, (1 - q) / 2}, {{3201, 4000}, (1 - q) / 2}};
    const std::vector<weighted<value_range>> attack_bytes = {
        {{201, 250}, q / 2}, {{3201, 4000}, q / 2}, {{51, 60}, (1 - q) / 2}, {{801, 1000}, (1 - q) / 2}};
    const std::vector<weighted<value_range>> bg_ports = {{{37001, 40000}, q / 2}, {{60001, 62000}, q / 2},
                                                         {{57001, 60000}, 1 - q}};
    const std::vector<weighted<value_range>> attack_ports = {{{57001, 60000}, q}, {{37001, 40000}, (1 - q) / 2},
                                                             {{60001, 62000}, (1 - q) / 2}};

    auto background = make_template("background", skew(tcp, udp), skew(dur_short, dur_long), bg_ports,
                                    skew(http, https), skew(five, six), bg_bytes, skew(fin, nofin));
    auto attack = make_template("attack-only", skew(udp, tcp), skew(dur_long, dur_short), attack_ports,
                                skew(https, http), skew(six, five), attack_bytes, skew(nofin, fin));

    std::vector<pattern_spec> out;
    for (const auto& t : ambiguous) {
        out.push_back({pattern_kind::attack_burst, 3, 8, true, t, binary_label::malicious});
        out.push_back({pattern_kind::isolated_service, 1, 1, false, t, binary_label::benign});
    }
    out.push_back({pattern_kind::attack_burst, 3, 8, true, attack, binary_label::malicious});
    out.push_back({pattern_kind::background_noise, 1, 1, false, background, binary_label::benign});
    return out;
}

synthetic_corpus generate_corpus(const synth_config& config) {
    const auto patterns = default_patterns(config.shared_templates, config.cue_strength, config.shifted_cue_strength);
    return generate_corpus(config, patterns);
}

synthetic_corpus generate_corpus(const synth_config& config, std::span<const pattern_spec> patterns) {
    config.validate();
    for (const auto& p : patterns) p.validate();

    // A template is ambiguous when some burst and some isolated service use it.
    std::set<std::string> burst_names, isolated_names;
    for (const auto& p : patterns) {
        if (p.kind == pattern_kind::attack_burst) burst_names.insert(p.feature_template.name);
        if (p.kind == pattern_kind::isolated_service) isolated_names.insert(p.feature_template.name);
    }
    std::vector<std::size_t> amb_burst, attack_only, isolated, background;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        const auto& p = patterns[i];
        const bool shared = burst_names.count(p.feature_template.name) && isolated_names.count(p.feature_template.name);
        switch (p.kind) {
        case pattern_kind::attack_burst:
            (shared ? amb_burst : attack_only).push_back(i);
            break;
        case pattern_kind::isolated_service:
            if (!shared)
                throw config_error("isolated service template '" + p.feature_template.name +
                                   "' has no attack burst counterpart");
            isolated.push_back(i);
            break;
        case pattern_kind::background_noise:
            if (burst_names.count(p.feature_template.name) || isolated_names.count(p.feature_template.name))
                throw config_error("background template '" + p.feature_template.name +
                                   "' is shared with another pattern kind");
            background.push_back(i);
            break;
        }
    }

    const auto N = config.total_flows;
    const auto n_mal = static_cast<std::size_t>(std::llround(config.mix.attack_burst * static_cast<double>(N)));
    const auto n_iso = static_cast<std::size_t>(std::llround(config.mix.isolated_service * static_cast<double>(N)));
    if (n_mal + n_iso > N) throw config_error("pattern mix weights round to more than total_flows");
    const std::size_t n_bg = N - n_mal - n_iso;
    const auto n_amb = static_cast<std::size_t>(std::llround(config.ambiguous_fraction * static_cast<double>(N)));
    if (n_amb < n_iso)
        throw config_error("isolated service share (" + std::to_string(n_iso) +
                           " flows) exceeds the ambiguous share (" + std::to_string(n_amb) + " flows)");
    const std::size_t n_amb_burst = n_amb - n_iso;
    if (n_amb_burst > n_mal)
        throw config_error("ambiguous share needs " + std::to_string(n_amb_burst) +
                           " attack burst flows but the burst weight allows " + std::to_string(n_mal));
    if (n_amb > 0 && (n_iso == 0 || n_amb_burst == 0))
        throw config_error("ambiguous flows must come from both attack bursts and isolated services; "
                           "adjust the burst or isolated-service weight");
    const std::size_t n_attack_only = n_mal - n_amb_burst;
    if (n_amb_burst > 0 && n_amb_burst < 3) throw config_error("ambiguous burst share is too small for one burst");
    if (n_attack_only > 0 && n_attack_only < 3) throw config_error("attack-only share is too small for one burst");
    if (n_attack_only > 0 && attack_only.empty()) throw config_error("mix needs attack-only patterns but none exist");
    if (n_bg > 0 && background.empty()) throw config_error("mix needs background patterns but none exist");
    if (n_amb > 0 && amb_burst.empty()) throw config_error("ambiguous share needs shared templates but none exist");

    std::mt19937_64 rng(config.seed);

    // Attack bursts. Ambiguous burst flows are spread over as many shared
    // templates as can each hold a full burst; isolated services mirror that
    // split so every shared tuple is emitted equally often by both classes.
    std::vector<unit> attack_units, benign_units;
    std::vector<std::size_t> burst_count(amb_burst.size(), 0), iso_count;
    if (n_amb_burst > 0) {
        const std::size_t used = std::min(amb_burst.size(), n_amb_burst / 3);
        const auto split = even_split(n_amb_burst, used);
        for (std::size_t k = 0; k < used; ++k) {
            const auto& p = patterns[amb_burst[k]];
            for (auto len : split_bursts(split[k], p.min_burst, p.max_burst, rng))
                attack_units.push_back({amb_burst[k], len});
            burst_count[k] = split[k];
        }
        // isolated pattern per shared template, in amb_burst order
        std::vector<std::size_t> iso_for(used, patterns.size());
        for (std::size_t k = 0; k < used; ++k)
            for (auto i : isolated)
                if (patterns[i].feature_template.name == patterns[amb_burst[k]].feature_template.name) iso_for[k] = i;
        std::vector<std::size_t> targets(used);
        if (n_iso == n_amb_burst) {
            targets.assign(split.begin(), split.end());
        } else {
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < used; ++k) {
                targets[k] = split[k] * n_iso / n_amb_burst;
                assigned += targets[k];
            }
            for (std::size_t k = 0; assigned < n_iso; k = (k + 1) % used, ++assigned) ++targets[k];
        }
        for (std::size_t k = 0; k < used; ++k) {
            if (targets[k] > 0 && iso_for[k] == patterns.size())
                throw config_error("shared template '" + patterns[amb_burst[k]].feature_template.name +
                                   "' lacks an isolated service pattern");
            for (std::size_t j = 0; j < targets[k]; ++j) benign_units.push_back({iso_for[k], 1});
        }
    }
    {
        std::size_t remaining = n_attack_only;
        while (remaining > 0) {
            const auto idx = attack_only[std::uniform_int_distribution<std::size_t>(0, attack_only.size() - 1)(rng)];
            const auto& p = patterns[idx];
            std::size_t len;
            if (remaining <= p.max_burst) {
                len = remaining;
            } else {
                const std::size_t top = std::min(p.max_burst, remaining - p.min_burst);
                len = top < p.min_burst ? remaining
                                        : std::uniform_int_distribution<std::size_t>(p.min_burst, top)(rng);
            }
            attack_units.push_back({idx, len});
            remaining -= len;
        }
    }
    for (std::size_t i = 0; i < n_bg; ++i)
        benign_units.push_back(
            {background[std::uniform_int_distribution<std::size_t>(0, background.size() - 1)(rng)], 1});

    std::shuffle(attack_units.begin(), attack_units.end(), rng);
    std::shuffle(benign_units.begin(), benign_units.end(), rng);

    // Quiet stretches and attack campaigns. The next stretch kind is drawn
    // in proportion to how many stretches each queue still holds, so both
    // queues drain together whatever the burst lengths.
    std::vector<unit> order;
    order.reserve(attack_units.size() + benign_units.size());
    const double mean_phase = (static_cast<double>(config.phase_min) + static_cast<double>(config.phase_max)) / 2;
    auto flows_in = [](const std::vector<unit>& units, std::size_t from) {
        std::size_t n = 0;
        for (std::size_t i = from; i < units.size(); ++i) n += units[i].length;
        return n;
    };
    const double attack_unit_len =
        attack_units.empty() ? 1.0 : static_cast<double>(flows_in(attack_units, 0)) / attack_units.size();
    double attack_left = static_cast<double>(flows_in(attack_units, 0));
    double benign_left = static_cast<double>(benign_units.size());
    std::size_t ai = 0, bi = 0;
    while (ai < attack_units.size() || bi < benign_units.size()) {
        const double attack_phases = attack_left / std::max(mean_phase, attack_unit_len);
        const double benign_phases = benign_left / std::max(mean_phase, 1.0);
        const bool attack_phase =
            std::uniform_real_distribution<double>(0.0, attack_phases + benign_phases)(rng) < attack_phases;
        const std::size_t target =
            std::uniform_int_distribution<std::size_t>(config.phase_min, config.phase_max)(rng);
        std::size_t taken = 0;
        if (attack_phase) {
            while (ai < attack_units.size() && taken < target) {
                taken += attack_units[ai].length;
                order.push_back(attack_units[ai++]);
            }
            attack_left -= static_cast<double>(taken);
        } else {
            while (bi < benign_units.size() && taken < target) {
                taken += benign_units[bi].length;
                order.push_back(benign_units[bi++]);
            }
            benign_left -= static_cast<double>(taken);
        }
    }

    // Keep isolated services isolated: no neighbour may share the template.
    auto name_of = [&](std::size_t u) -> const std::string& { return patterns[order[u].pattern].feature_template.name; };
    auto kind_of = [&](std::size_t u) { return patterns[order[u].pattern].kind; };
    auto clash = [&](std::size_t u) {
        if (kind_of(u) != pattern_kind::isolated_service) return false;
        if (u > 0 && name_of(u - 1) == name_of(u)) return true;
        if (u + 1 < order.size() && name_of(u + 1) == name_of(u)) return true;
        return false;
    };
    auto region_clear = [&](std::size_t u) {
        for (std::size_t v = (u > 0 ? u - 1 : 0); v <= std::min(u + 1, order.size() - 1); ++v)
            if (clash(v)) return false;
        return true;
    };
    for (std::size_t u = 0; u < order.size(); ++u) {
        if (!clash(u)) continue;
        bool fixed = false;
        for (std::size_t step = 2; step < order.size() && !fixed; ++step) {
            const std::size_t v = (u + step) % order.size();
            if (!is_benign_kind(kind_of(v))) continue;
            std::swap(order[u], order[v]);
            // positions right of u are repaired later in the sweep
            if (!clash(u) && (u == 0 || !clash(u - 1)) && region_clear(v)) {
                fixed = true;
            } else {
                std::swap(order[u], order[v]);
            }
        }
        if (!fixed) throw config_error("cannot place isolated services apart; add background or shared templates");
    }

    synthetic_corpus corpus;
    corpus.data.sources.push_back("synthgen:seed=" + std::to_string(config.seed));
    corpus.data.records.reserve(N);
    corpus.truth.reserve(N);
    std::uint64_t occurrence = 0;
    for (const auto& u : order) {
        const auto& p = patterns[u.pattern];
        const auto& t = p.feature_template;
        const auto draw = draw_alternatives(t, rng);
        const bool shared = burst_names.count(t.name) && isolated_names.count(t.name);
        const value_range& ports = t.src_port[draw.src_port].value;
        double port = uniform_int(ports, rng);
        for (std::size_t j = 0; j < u.length; ++j) {
            if (j > 0) {
                if (p.port_rotation) {
                    port += static_cast<double>(std::uniform_int_distribution<int>(1, 7)(rng));
                    if (port > ports.hi) port = ports.lo + (port - ports.hi - 1);
                } else {
                    port = uniform_int(ports, rng);
                }
            }
            labeled_flow f;
            f.record = draw_flow(t, draw, port, rng);
            f.label = p.label;
            f.record.label = p.label == binary_label::malicious ? "attacker" : "normal";
            if (p.label == binary_label::malicious) f.record.attack_type = t.name;
            ground_truth g;
            g.index = corpus.truth.size();
            g.kind = p.kind;
            g.label = p.label;
            g.ambiguous = shared;
            g.pattern = static_cast<std::uint32_t>(u.pattern);
            g.occurrence = occurrence;
            corpus.data.records.push_back(std::move(f));
            corpus.truth.push_back(g);
        }
        ++occurrence;
    }
    corpus.data.data_rows = corpus.data.records.size();

    if (!config.domain.is_identity()) return shift_domain(corpus, config.domain);
    return corpus;
}

synthetic_corpus shift_domain(const synthetic_corpus& corpus, const domain_params& params) {
    if (!(params.byte_scale >= 0)) throw config_error("byte scale must be non-negative");
    synthetic_corpus out = corpus;
    if (params.is_identity()) return out;
    constexpr double port_max = 65535;
    auto shift_port = [&](double& port) {
        if (port < params.ephemeral_floor) return;
        double v = port + params.port_offset;
        if (v < 0) {
            v = 0;
            ++out.clamped_values;
        } else if (v > port_max) {
            v = port_max;
            ++out.clamped_values;
        }
        port = v;
    };
    for (auto& f : out.data.records) {
        shift_port(f.record.src_pt);
        shift_port(f.record.dst_pt);
        const double b = std::round(static_cast<double>(f.record.bytes) * params.byte_scale);
        f.record.bytes = static_cast<std::uint64_t>(std::max(0.0, b));
    }
    return out;
}

std::vector<std::size_t> burst_lengths(std::span<const ground_truth> truth) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < truth.size();) {
        std::size_t j = i + 1;
        while (j < truth.size() && truth[j].occurrence == truth[i].occurrence) ++j;
        if (truth[i].kind == pattern_kind::attack_burst) out.push_back(j - i);
        i = j;
    }
    return out;
}

void write_ground_truth(std::ostream& out, std::span<const ground_truth> truth) {
    out << truth_header << "\n";
    out << "records=" << truth.size() << "\n";
    out << "index,kind,label,ambiguous,pattern,occurrence\n";
    for (const auto& g : truth)
        out << g.index << ',' << to_string(g.kind) << ',' << to_string(g.label) << ',' << (g.ambiguous ? 1 : 0)
            << ',' << g.pattern << ',' << g.occurrence << '\n';
}

void write_ground_truth(const std::filesystem::path& path, std::span<const ground_truth> truth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open " + path.string() + " for writing");
    write_ground_truth(out, truth);
    if (!out) throw error("failed writing " + path.string());
}

std::vector<ground_truth> read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != truth_header)
        throw corruption_error(path.string() + " is not a ground-truth sidecar (expected '" +
                               std::string(truth_header) + "')");
    std::size_t expected = 0;
    if (!std::getline(in, line) || line.rfind("records=", 0) != 0)
        throw corruption_error(path.string() + ": missing records= line");
    expected = std::stoull(line.substr(8));
    std::getline(in, line);  // column names
    std::vector<ground_truth> out;
    out.reserve(expected);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field[6];
        for (auto& f : field)
            if (!std::getline(ss, f, ','))
                throw corruption_error(path.string() + ": short row " + std::to_string(out.size()));
        ground_truth g;
        try {
            g.index = std::stoull(field[0]);
            g.kind = pattern_kind_from_string(field[1]);
            g.label = field[2] == "Malicious" || field[2] == "malicious" ? binary_label::malicious
                                                                       : binary_label::benign;
            g.ambiguous = field[3] == "1";
            g.pattern = static_cast<std::uint32_t>(std::stoul(field[4]));
            g.occurrence = std::stoull(field[5]);
        } catch (const std::logic_error&) {
            throw corruption_error(path.string() + ": malformed row " + std::to_string(out.size()));
        }
        out.push_back(g);
    }
    if (out.size() != expected)
        throw corruption_error(path.string() + ": expected " + std::to_string(expected) + " rows, found " +
                               std::to_string(out.size()));
    return out;
}

}  // namespace fsnids
