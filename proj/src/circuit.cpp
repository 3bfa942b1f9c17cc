#include "zfit/circuit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "zfit/error.hpp"

namespace zfit {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct ElementBounds {
    double lower, upper;
    SamplingScale scale;
};

// Component sampling ranges. The ohmic resistor (first R in the top-level
// series chain) is distinguished from all other resistors.
constexpr ElementBounds kOhmicR{1.0, 10.0, SamplingScale::LogUniform};
constexpr ElementBounds kOtherR{10.0, 1e5, SamplingScale::LogUniform};
constexpr ElementBounds kCapacitor{1e-6, 1e-3, SamplingScale::LogUniform};
constexpr ElementBounds kInductor{1e-6, 1e-3, SamplingScale::LogUniform};
constexpr ElementBounds kCpeMagnitude{1e-6, 1e-3, SamplingScale::LogUniform};
constexpr ElementBounds kCpeExponent{0.3, 1.0, SamplingScale::Uniform};

} // namespace

char element_letter(ElementKind kind) noexcept {
    switch (kind) {
        case ElementKind::Resistor: return 'R';
        case ElementKind::Capacitor: return 'C';
        case ElementKind::Inductor: return 'L';
        case ElementKind::Cpe: return 'P';
    }
    return '?';
}

int element_param_count(ElementKind kind) noexcept {
    return kind == ElementKind::Cpe ? 2 : 1;
}

std::complex<double> element_impedance(ElementKind kind, std::span<const double> params,
                                       double omega) {
    std::complex<double> z;
    switch (kind) {
        case ElementKind::Resistor:
            z = {params[0], 0.0};
            break;
        case ElementKind::Capacitor:
            z = {0.0, -1.0 / (omega * params[0])};
            break;
        case ElementKind::Inductor:
            z = {0.0, omega * params[0]};
            break;
        case ElementKind::Cpe: {
            // Z = 1 / (Q (jw)^a), (jw)^a = w^a exp(j a pi/2)
            const double q = params[0];
            const double alpha = params[1];
            const double mag = q * std::pow(omega, alpha);
            const double arg = alpha * kPi / 2.0;
            z = 1.0 / std::polar(mag, arg);
            break;
        }
    }
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw EvalError("element impedance is not finite", 0);
    return z;
}

bool ParallelNode::operator==(const ParallelNode& other) const {
    return branches == other.branches;
}

bool SeriesNode::operator==(const SeriesNode& other) const {
    return items == other.items;
}

namespace {

// ---------------------------------------------------------------------------
// Parsing

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    SeriesNode run() {
        skip_ws();
        if (pos_ >= s_.size())
            throw CircuitError("empty circuit description", 0);
        SeriesNode root = parse_series(/*inside_parallel=*/false);
        skip_ws();
        if (pos_ < s_.size()) {
            if (s_[pos_] == ']')
                throw CircuitError("unbalanced bracket", pos_);
            throw CircuitError(std::string("unexpected character '") + s_[pos_] + "'", pos_);
        }
        return root;
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool at_terminator(bool inside_parallel) {
        if (pos_ >= s_.size()) return true;
        const char c = s_[pos_];
        return inside_parallel && (c == ',' || c == ']');
    }

    SeriesNode parse_series(bool inside_parallel) {
        SeriesNode node;
        node.items.push_back(parse_item(inside_parallel));
        for (;;) {
            skip_ws();
            if (pos_ >= s_.size() || s_[pos_] != '-') break;
            ++pos_;
            skip_ws();
            if (at_terminator(inside_parallel))
                throw CircuitError("expected an element after '-'", pos_);
            node.items.push_back(parse_item(inside_parallel));
        }
        return node;
    }

    SeriesNode::Item parse_item(bool inside_parallel) {
        skip_ws();
        if (at_terminator(inside_parallel))
            throw CircuitError("empty branch", pos_);
        const char c = s_[pos_];
        if (c == '[') return parse_parallel();
        if (c == ']')
            throw CircuitError("unbalanced bracket", pos_);
        return parse_element();
    }

    ParallelNode parse_parallel() {
        const std::size_t open = pos_;
        ++pos_; // '['
        ParallelNode node;
        node.branches.push_back(parse_series(/*inside_parallel=*/true));
        for (;;) {
            skip_ws();
            if (pos_ >= s_.size())
                throw CircuitError("unbalanced bracket", open);
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < s_.size() && (s_[pos_] == ',' || s_[pos_] == ']'))
                    throw CircuitError("empty branch", pos_);
                node.branches.push_back(parse_series(/*inside_parallel=*/true));
                continue;
            }
            if (s_[pos_] == ']') {
                if (node.branches.size() < 2)
                    throw CircuitError("parallel group needs at least 2 branches", open);
                ++pos_;
                return node;
            }
            throw CircuitError(std::string("unexpected character '") + s_[pos_] + "'", pos_);
        }
    }

    Element parse_element() {
        const std::size_t at = pos_;
        const char c = s_[pos_];
        ElementKind kind;
        switch (c) {
            case 'R': kind = ElementKind::Resistor; break;
            case 'C': kind = ElementKind::Capacitor; break;
            case 'L': kind = ElementKind::Inductor; break;
            case 'P': kind = ElementKind::Cpe; break;
            default:
                throw CircuitError(std::string("unknown element letter '") + c + "'", at);
        }
        ++pos_;
        const std::size_t digits = pos_;
        long value = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            value = value * 10 + (s_[pos_] - '0');
            if (value > 1000000)
                throw CircuitError("element index too large", digits);
            ++pos_;
        }
        if (pos_ == digits)
            throw CircuitError("expected element index", digits);
        if (value < 1)
            throw CircuitError("element index must be positive", digits);
        return Element{kind, static_cast<int>(value)};
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Validation, formatting, schema

void validate_node(const SeriesNode& node, std::set<int>& labels);

void validate_item(const SeriesNode::Item& item, std::set<int>& labels) {
    if (const auto* el = std::get_if<Element>(&item)) {
        if (el->label < 1)
            throw CircuitError("element index must be positive", 0);
        if (!labels.insert(el->label).second)
            throw CircuitError("duplicate element label " + std::to_string(el->label), 0);
    } else {
        const auto& par = std::get<ParallelNode>(item);
        if (par.branches.size() < 2)
            throw CircuitError("parallel group needs at least 2 branches", 0);
        for (const auto& branch : par.branches) validate_node(branch, labels);
    }
}

void validate_node(const SeriesNode& node, std::set<int>& labels) {
    if (node.items.empty())
        throw CircuitError("series chain needs at least 1 item", 0);
    for (const auto& item : node.items) validate_item(item, labels);
}

void format_series(const SeriesNode& node, std::string& out, bool with_labels);

void format_item(const SeriesNode::Item& item, std::string& out, bool with_labels) {
    if (const auto* el = std::get_if<Element>(&item)) {
        out += element_letter(el->kind);
        if (with_labels) out += std::to_string(el->label);
    } else {
        const auto& par = std::get<ParallelNode>(item);
        out += '[';
        for (std::size_t i = 0; i < par.branches.size(); ++i) {
            if (i) out += ',';
            format_series(par.branches[i], out, with_labels);
        }
        out += ']';
    }
}

void format_series(const SeriesNode& node, std::string& out, bool with_labels) {
    for (std::size_t i = 0; i < node.items.size(); ++i) {
        if (i) out += '-';
        format_item(node.items[i], out, with_labels);
    }
}

void append_descriptors(const Element& el, bool ohmic, std::vector<ParamDescriptor>& out) {
    const std::string elem_name = std::string(1, element_letter(el.kind)) + std::to_string(el.label);
    switch (el.kind) {
        case ElementKind::Resistor: {
            const ElementBounds& b = ohmic ? kOhmicR : kOtherR;
            out.push_back({elem_name, elem_name, ParamRole::Value, b.lower, b.upper, b.scale});
            break;
        }
        case ElementKind::Capacitor:
            out.push_back({elem_name, elem_name, ParamRole::Value, kCapacitor.lower,
                           kCapacitor.upper, kCapacitor.scale});
            break;
        case ElementKind::Inductor:
            out.push_back({elem_name, elem_name, ParamRole::Value, kInductor.lower,
                           kInductor.upper, kInductor.scale});
            break;
        case ElementKind::Cpe:
            out.push_back({elem_name + "_w", elem_name, ParamRole::CpeMagnitude,
                           kCpeMagnitude.lower, kCpeMagnitude.upper, kCpeMagnitude.scale});
            out.push_back({elem_name + "_n", elem_name, ParamRole::CpeExponent,
                           kCpeExponent.lower, kCpeExponent.upper, kCpeExponent.scale});
            break;
    }
}

void build_schema(const SeriesNode& node, bool top_level, int& ohmic_label,
                  std::vector<ParamDescriptor>& out) {
    for (const auto& item : node.items) {
        if (const auto* el = std::get_if<Element>(&item)) {
            const bool ohmic = el->kind == ElementKind::Resistor && el->label == ohmic_label;
            append_descriptors(*el, ohmic, out);
        } else {
            for (const auto& branch : std::get<ParallelNode>(item).branches)
                build_schema(branch, false, ohmic_label, out);
        }
    }
    (void)top_level;
}

// Label of the first resistor that is a direct leaf of the top-level chain,
// or -1 when there is none.
int find_ohmic_label(const SeriesNode& root) {
    for (const auto& item : root.items)
        if (const auto* el = std::get_if<Element>(&item))
            if (el->kind == ElementKind::Resistor) return el->label;
    return -1;
}

// ---------------------------------------------------------------------------
// Impedance evaluation

std::complex<double> eval_series(const SeriesNode& node, const double*& p, double omega);

std::complex<double> eval_item(const SeriesNode::Item& item, const double*& p, double omega) {
    if (const auto* el = std::get_if<Element>(&item)) {
        const int n = element_param_count(el->kind);
        std::span<const double> params(p, static_cast<std::size_t>(n));
        p += n;
        switch (el->kind) {
            case ElementKind::Resistor: return {params[0], 0.0};
            case ElementKind::Capacitor: return {0.0, -1.0 / (omega * params[0])};
            case ElementKind::Inductor: return {0.0, omega * params[0]};
            case ElementKind::Cpe: {
                const double mag = params[0] * std::pow(omega, params[1]);
                const double arg = params[1] * kPi / 2.0;
                return 1.0 / std::polar(mag, arg);
            }
        }
        return {};
    }
    const auto& par = std::get<ParallelNode>(item);
    std::complex<double> y = 0.0;
    for (const auto& branch : par.branches) y += 1.0 / eval_series(branch, p, omega);
    return 1.0 / y;
}

std::complex<double> eval_series(const SeriesNode& node, const double*& p, double omega) {
    std::complex<double> z = 0.0;
    for (const auto& item : node.items) z += eval_item(item, p, omega);
    return z;
}

// Evaluation carrying first derivatives with respect to every parameter.
// Each node writes the derivatives for its own parameter range [begin, end)
// into dz; parallel combination rescales each branch range in place.
struct GradEvaluator {
    const ParameterSet& params;
    double omega;
    std::span<std::complex<double>> dz;
    std::size_t cursor = 0;

    std::complex<double> element(const Element& el) {
        const std::size_t at = cursor;
        switch (el.kind) {
            case ElementKind::Resistor: {
                cursor += 1;
                dz[at] = 1.0;
                return {params[at], 0.0};
            }
            case ElementKind::Capacitor: {
                cursor += 1;
                const std::complex<double> z{0.0, -1.0 / (omega * params[at])};
                dz[at] = -z / params[at];
                return z;
            }
            case ElementKind::Inductor: {
                cursor += 1;
                dz[at] = {0.0, omega};
                return {0.0, omega * params[at]};
            }
            case ElementKind::Cpe: {
                cursor += 2;
                const double q = params[at], alpha = params[at + 1];
                const std::complex<double> z = 1.0 / std::polar(q * std::pow(omega, alpha),
                                                                alpha * kPi / 2.0);
                dz[at] = -z / q;
                dz[at + 1] = -z * std::complex<double>(std::log(omega), kPi / 2.0);
                return z;
            }
        }
        return {};
    }

    std::complex<double> item(const SeriesNode::Item& it) {
        if (const auto* el = std::get_if<Element>(&it)) return element(*el);
        const auto& par = std::get<ParallelNode>(it);
        // Z = 1 / sum_b(1/Z_b); dZ/dp = (Z/Z_b)^2 dZ_b/dp for p in branch b.
        std::complex<double> y = 0.0;
        std::vector<std::pair<std::size_t, std::complex<double>>> marks; // (begin, Z_b)
        marks.reserve(par.branches.size());
        for (const auto& branch : par.branches) {
            const std::size_t begin = cursor;
            const std::complex<double> zb = series(branch);
            marks.emplace_back(begin, zb);
            y += 1.0 / zb;
        }
        const std::complex<double> z = 1.0 / y;
        for (std::size_t b = 0; b < marks.size(); ++b) {
            const auto [begin, zb] = marks[b];
            const std::size_t end = b + 1 < marks.size() ? marks[b + 1].first : cursor;
            const std::complex<double> factor = (z / zb) * (z / zb);
            for (std::size_t k = begin; k < end; ++k) dz[k] *= factor;
        }
        return z;
    }

    std::complex<double> series(const SeriesNode& node) {
        std::complex<double> z = 0.0;
        for (const auto& it : node.items) z += item(it);
        return z;
    }
};

// ---------------------------------------------------------------------------
// Canonical reordering of interchangeable value blocks

struct BlockGroupKey {
    std::string structure; // label-erased formatting
    std::string bounds;    // descriptor bounds/roles signature

    bool operator<(const BlockGroupKey& o) const {
        return std::tie(structure, bounds) < std::tie(o.structure, o.bounds);
    }
};

std::string bounds_signature(std::span<const ParamDescriptor> slice) {
    std::ostringstream os;
    for (const auto& d : slice)
        os << static_cast<int>(d.role) << ':' << d.lower << ':' << d.upper << ':'
           << static_cast<int>(d.scale) << ';';
    return os.str();
}

std::size_t item_param_count(const SeriesNode::Item& item);

std::size_t series_param_count(const SeriesNode& node) {
    std::size_t n = 0;
    for (const auto& item : node.items) n += item_param_count(item);
    return n;
}

std::size_t item_param_count(const SeriesNode::Item& item) {
    if (const auto* el = std::get_if<Element>(&item))
        return static_cast<std::size_t>(element_param_count(el->kind));
    std::size_t n = 0;
    for (const auto& branch : std::get<ParallelNode>(item).branches)
        n += series_param_count(branch);
    return n;
}

// Sorts the value blocks of interchangeable children (same shape, same
// bounds) into nondecreasing lexicographic order. Applies bottom-up so
// nested groups are canonical before their parents compare.
void canonicalize_children(
    ParameterSet& values,
    const std::vector<std::tuple<BlockGroupKey, std::size_t, std::size_t>>& blocks) {
    std::map<BlockGroupKey, std::vector<std::pair<std::size_t, std::size_t>>> groups;
    for (const auto& [key, offset, len] : blocks) groups[key].push_back({offset, len});
    for (auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        std::vector<std::vector<double>> vals;
        vals.reserve(members.size());
        for (auto [offset, len] : members)
            vals.emplace_back(values.begin() + offset, values.begin() + offset + len);
        std::sort(vals.begin(), vals.end());
        for (std::size_t i = 0; i < members.size(); ++i)
            std::copy(vals[i].begin(), vals[i].end(), values.begin() + members[i].first);
    }
}

void canonicalize_series(const SeriesNode& node, std::span<const ParamDescriptor> schema,
                         std::size_t offset, ParameterSet& values);

void canonicalize_parallel(const ParallelNode& node, std::span<const ParamDescriptor> schema,
                           std::size_t offset, ParameterSet& values) {
    std::vector<std::tuple<BlockGroupKey, std::size_t, std::size_t>> blocks;
    std::size_t at = offset;
    for (const auto& branch : node.branches) {
        const std::size_t len = series_param_count(branch);
        canonicalize_series(branch, schema, at, values);
        std::string structure;
        format_series(branch, structure, /*with_labels=*/false);
        blocks.push_back({BlockGroupKey{structure, bounds_signature(schema.subspan(at, len))},
                          at, len});
        at += len;
    }
    canonicalize_children(values, blocks);
}

void canonicalize_series(const SeriesNode& node, std::span<const ParamDescriptor> schema,
                         std::size_t offset, ParameterSet& values) {
    std::vector<std::tuple<BlockGroupKey, std::size_t, std::size_t>> blocks;
    std::size_t at = offset;
    for (const auto& item : node.items) {
        const std::size_t len = item_param_count(item);
        if (const auto* par = std::get_if<ParallelNode>(&item))
            canonicalize_parallel(*par, schema, at, values);
        std::string structure;
        format_item(item, structure, /*with_labels=*/false);
        blocks.push_back({BlockGroupKey{structure, bounds_signature(schema.subspan(at, len))},
                          at, len});
        at += len;
    }
    canonicalize_children(values, blocks);
}

} // namespace

CircuitModel CircuitModel::parse(std::string_view spec) {
    Parser parser(spec);
    return from_ast(parser.run());
}

CircuitModel CircuitModel::from_ast(SeriesNode root) {
    std::set<int> labels;
    validate_node(root, labels);

    CircuitModel model;
    model.root_ = std::move(root);
    format_series(model.root_, model.text_, /*with_labels=*/true);
    int ohmic = find_ohmic_label(model.root_);
    build_schema(model.root_, true, ohmic, model.schema_);
    return model;
}

std::complex<double> CircuitModel::impedance_at(const ParameterSet& params, double freq_hz) const {
    if (params.size() != schema_.size())
        throw ConfigError("parameter count mismatch: expected " + std::to_string(schema_.size()) +
                          ", got " + std::to_string(params.size()));
    const double omega = 2.0 * kPi * freq_hz;
    const double* p = params.data();
    return eval_series(root_, p, omega);
}

Spectrum CircuitModel::impedance(const ParameterSet& params, std::span<const double> freqs_hz) const {
    if (params.size() != schema_.size())
        throw ConfigError("parameter count mismatch: expected " + std::to_string(schema_.size()) +
                          ", got " + std::to_string(params.size()));
    Spectrum s;
    s.freqs.assign(freqs_hz.begin(), freqs_hz.end());
    s.z_real.resize(freqs_hz.size());
    s.z_imag.resize(freqs_hz.size());
    for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
        if (!(freqs_hz[i] > 0.0))
            throw ConfigError("frequency must be positive (point " + std::to_string(i) + ")");
        const double omega = 2.0 * kPi * freqs_hz[i];
        const double* p = params.data();
        const std::complex<double> z = eval_series(root_, p, omega);
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw EvalError("impedance is not finite", i);
        s.z_real[i] = z.real();
        s.z_imag[i] = z.imag();
    }
    return s;
}

void CircuitModel::impedance_grad(const ParameterSet& params, double freq_hz,
                                  std::complex<double>& z,
                                  std::span<std::complex<double>> dz) const {
    GradEvaluator ev{params, 2.0 * kPi * freq_hz, dz};
    z = ev.series(root_);
}

ParameterSet CircuitModel::canonicalize(const ParameterSet& params) const {
    if (params.size() != schema_.size())
        throw ConfigError("parameter count mismatch in canonicalize");
    ParameterSet out = params;
    canonicalize_series(root_, schema_, 0, out);
    return out;
}

} // namespace zfit
