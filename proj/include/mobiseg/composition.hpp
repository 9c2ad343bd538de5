#pragma once

namespace mobiseg {

/// Native-born / foreign-born / other counts; may be weighted.
struct Composition {
    double native = 0.0;
    double foreign = 0.0;
    double other = 0.0;

    double total() const { return native + foreign + other; }
    bool empty() const { return native == 0.0 && foreign == 0.0 && other == 0.0; }

    Composition& operator+=(const Composition& c)
    {
        native += c.native;
        foreign += c.foreign;
        other += c.other;
        return *this;
    }
    Composition scaled(double k) const { return {native * k, foreign * k, other * k}; }
    /// Fractions of the total; all zero for an empty composition.
    Composition shares() const
    {
        const double t = total();
        return t > 0.0 ? scaled(1.0 / t) : Composition{};
    }
    friend bool operator==(const Composition&, const Composition&) = default;
};

} // namespace mobiseg
