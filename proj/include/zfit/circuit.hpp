#pragma once

#include <complex>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "zfit/spectrum.hpp"

namespace zfit {

enum class ElementKind { Resistor, Capacitor, Inductor, Cpe };

char element_letter(ElementKind kind) noexcept;
int element_param_count(ElementKind kind) noexcept; // 1, except 2 for CPE

/// Impedance of a single element at angular frequency omega (rad/s).
/// R: Z = R, C: Z = 1/(jwC), L: Z = jwL, CPE: Z = 1/(Q (jw)^a).
/// Throws EvalError if the result is not finite.
std::complex<double> element_impedance(ElementKind kind, std::span<const double> params,
                                       double omega);

struct Element {
    ElementKind kind;
    int label; // positive, unique within a model

    bool operator==(const Element&) const = default;
};

struct SeriesNode;

struct ParallelNode {
    std::vector<SeriesNode> branches; // >= 2

    bool operator==(const ParallelNode&) const;
};

/// Ordered chain of items combined in series. An item is a leaf element or a
/// parallel group of branch chains.
struct SeriesNode {
    using Item = std::variant<Element, ParallelNode>;
    std::vector<Item> items; // >= 1

    bool operator==(const SeriesNode&) const;
};

enum class ParamRole { Value, CpeMagnitude, CpeExponent };
enum class SamplingScale { LogUniform, Uniform };

/// One scalar parameter of a circuit: its name (e.g. "R1", "P2_w", "P2_n"),
/// owning element, role, sampling bounds and sampling scale.
struct ParamDescriptor {
    std::string name;
    std::string element;
    ParamRole role = ParamRole::Value;
    double lower = 0.0;
    double upper = 0.0;
    SamplingScale scale = SamplingScale::LogUniform;
};

/// Values aligned one-to-one with a model's parameter schema.
using ParameterSet = std::vector<double>;

/// A parsed equivalent-circuit model. Immutable after construction; safe to
/// share across threads.
///
/// Notation: series items joined by '-', parallel groups bracketed with
/// comma-separated branches, elements as a kind letter plus positive index,
/// e.g. "R1-[P2,R3]-P4".
class CircuitModel {
public:
    /// Parses circuit notation. Throws CircuitError (with byte offset) on
    /// unbalanced brackets, unknown element letters, duplicate labels,
    /// empty branches, or malformed indices.
    static CircuitModel parse(std::string_view spec);

    /// Builds a model from an AST, validating the structural invariants.
    static CircuitModel from_ast(SeriesNode root);

    /// Canonical text form; parse(format()) is structurally identical.
    const std::string& format() const noexcept { return text_; }

    const SeriesNode& root() const noexcept { return root_; }

    /// Parameter descriptors in depth-first, left-to-right traversal order
    /// (CPE contributes magnitude then exponent). The first resistor of the
    /// top-level series chain is treated as the ohmic resistance and gets
    /// the [1, 10] ohm range; other resistors get [10, 1e5].
    const std::vector<ParamDescriptor>& schema() const noexcept { return schema_; }

    std::size_t param_count() const noexcept { return schema_.size(); }

    /// Complex impedance at a single frequency (Hz). Parameters must be
    /// aligned with the schema and positive; bounds are not enforced here so
    /// that fitting may explore a widened box.
    std::complex<double> impedance_at(const ParameterSet& params, double freq_hz) const;

    /// Impedance over a frequency grid. Throws EvalError (with point index)
    /// if any value is non-finite.
    Spectrum impedance(const ParameterSet& params, std::span<const double> freqs_hz) const;

    /// Impedance and its gradient with respect to every parameter at one
    /// frequency. dz must have param_count() entries. No finiteness check.
    void impedance_grad(const ParameterSet& params, double freq_hz,
                        std::complex<double>& z, std::span<std::complex<double>> dz) const;

    /// Reorders the values of structurally interchangeable blocks (sibling
    /// series items or parallel branches with identical shape and bounds)
    /// into a canonical order. The returned set produces the same impedance
    /// at every frequency; it only fixes which of several equivalent
    /// labelings is reported, so that parameter sets can be compared
    /// component-by-component.
    ParameterSet canonicalize(const ParameterSet& params) const;

    bool operator==(const CircuitModel& other) const { return root_ == other.root_; }

private:
    CircuitModel() = default;

    SeriesNode root_;
    std::string text_;
    std::vector<ParamDescriptor> schema_;
};

} // namespace zfit
