#pragma once

/// \file spin_core.hpp
/// \brief Ground-state spin Hamiltonian of a V_B defect coupled to its three
/// nearest-neighbour nitrogen nuclei, in full and axial-effective form, with
/// exact diagonalization and transition extraction.
///
/// Basis ordering is fixed: |m_S> (x) |m_I,1> (x) |m_I,2> (x) |m_I,3>, the
/// electron factor varying slowest. Within every factor the projections run
/// from +S down to -S.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbodmr/common.hpp"
#include "vbodmr/constants.hpp"
#include "vbodmr/hermitian.hpp"

namespace vbodmr {

enum class Isotope { N14, N15 };

struct IsotopeSpecies {
    Isotope kind = Isotope::N14;

    static constexpr IsotopeSpecies of(Isotope k) { return IsotopeSpecies{k}; }

    constexpr HalfInt spin() const {
        return kind == Isotope::N14 ? HalfInt::from_int(1) : HalfInt::from_twice(1);
    }
    constexpr int multiplicity() const { return spin().twice() + 1; }
    constexpr double gamma_khz_per_mt() const {
        return kind == Isotope::N14 ? constants::gamma_n14_khz_per_mt : constants::gamma_n15_khz_per_mt;
    }
    std::string name() const { return kind == Isotope::N14 ? "14N" : "15N"; }
    constexpr bool operator==(const IsotopeSpecies&) const = default;
};

using Tensor3 = std::array<std::array<double, 3>, 3>;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

/// Quadrupole strengths along p(j) (vacancy -> nitrogen), z, and o(j) = p x z.
struct Quadrupole {
    double p = 0.0, z = 0.0, o = 0.0;
    bool is_zero() const { return p == 0.0 && z == 0.0 && o == 0.0; }
};

struct NuclearSite {
    IsotopeSpecies species;
    Tensor3 hfi{};  // MHz, rows = electron axis, columns = nuclear axis
    Quadrupole quadrupole;
    int site_index = 1;  // 1..3

    /// Site with only the A_zz element of the hyperfine tensor set.
    static NuclearSite axial(Isotope kind, double a_zz, int index) {
        NuclearSite s;
        s.species = IsotopeSpecies::of(kind);
        s.hfi[2][2] = a_zz;
        s.site_index = index;
        return s;
    }

    double a_zz() const { return hfi[2][2]; }

    void validate() const {
        if (site_index < 1 || site_index > 3) throw std::invalid_argument("site_index must be 1, 2 or 3");
        if (species.kind == Isotope::N15 && !quadrupole.is_zero())
            throw std::invalid_argument("quadrupole coupling is undefined for a spin-1/2 nucleus");
    }
};

struct ElectronParams {
    double d_gs = constants::zfs_ground_mhz;
    double e_x = 0.0;
    double e_y = 0.0;
    double gamma_e = constants::gamma_e_mhz_per_mt;
    Vec3 b_field;  // mT

    void validate() const {
        if (!(gamma_e > 0.0)) throw std::invalid_argument("gamma_e must be positive");
    }
};

struct SpinSystem {
    ElectronParams electron;
    std::array<NuclearSite, 3> sites;
    bool include_nuclear_zeeman = false;
    bool include_quadrupole = false;
    bool include_strain = false;

    std::size_t nuclear_dim() const {
        std::size_t d = 1;
        for (const auto& s : sites) d *= static_cast<std::size_t>(s.species.multiplicity());
        return d;
    }
    std::size_t dim() const { return 3 * nuclear_dim(); }

    void validate() const {
        electron.validate();
        for (const auto& s : sites) s.validate();
    }
};

/// Defect "#n": sites 1..3-n carry 14N, the remaining n carry 15N, all with
/// axial hyperfine tensors and an axial field.
inline SpinSystem make_configuration(int n15_count, double a14, double a15, double d_gs, double b_z) {
    if (n15_count < 0 || n15_count > 3) throw std::invalid_argument("n15_count must be in [0,3]");
    SpinSystem sys;
    sys.electron.d_gs = d_gs;
    sys.electron.b_field = Vec3{0.0, 0.0, b_z};
    for (int j = 0; j < 3; ++j) {
        const bool is15 = j >= 3 - n15_count;
        sys.sites[j] = NuclearSite::axial(is15 ? Isotope::N15 : Isotope::N14, is15 ? a15 : a14, j + 1);
    }
    return sys;
}

using NuclearLabel = std::array<HalfInt, 3>;

struct BasisState {
    int m_s = 0;
    NuclearLabel m_i;
};

namespace detail {

inline std::vector<HalfInt> projections(HalfInt spin) {
    std::vector<HalfInt> out;
    for (int t = spin.twice(); t >= -spin.twice(); t -= 2) out.push_back(HalfInt::from_twice(t));
    return out;
}

}  // namespace detail

/// Nuclear product states in basis order.
inline std::vector<NuclearLabel> nuclear_states(const SpinSystem& sys) {
    std::vector<NuclearLabel> out;
    const auto p1 = detail::projections(sys.sites[0].species.spin());
    const auto p2 = detail::projections(sys.sites[1].species.spin());
    const auto p3 = detail::projections(sys.sites[2].species.spin());
    for (auto a : p1)
        for (auto b : p2)
            for (auto c : p3) out.push_back({a, b, c});
    return out;
}

inline std::vector<BasisState> basis_states(const SpinSystem& sys) {
    std::vector<BasisState> out;
    const auto nuc = nuclear_states(sys);
    for (int ms : {1, 0, -1})
        for (const auto& n : nuc) out.push_back({ms, n});
    return out;
}

struct SpinOperators {
    CMatrix x, y, z;
};

/// Spin matrices for arbitrary spin, projections ordered +S ... -S.
inline SpinOperators spin_operators(HalfInt spin) {
    const auto m = detail::projections(spin);
    const std::size_t d = m.size();
    const double s = spin.value();
    SpinOperators ops{CMatrix(d), CMatrix(d), CMatrix(d)};
    for (std::size_t i = 0; i < d; ++i) {
        ops.z(i, i) = m[i].value();
        if (i + 1 < d) {
            // <m+1| S+ |m> with m = m[i+1]
            const double mm = m[i + 1].value();
            const double up = std::sqrt(s * (s + 1) - mm * (mm + 1));
            ops.x(i, i + 1) = 0.5 * up;
            ops.x(i + 1, i) = 0.5 * up;
            ops.y(i, i + 1) = cplx(0.0, -0.5 * up);
            ops.y(i + 1, i) = cplx(0.0, 0.5 * up);
        }
    }
    return ops;
}

namespace detail {

/// Embed a single-factor operator at position `slot` of the product space.
inline CMatrix embed(const CMatrix& op, std::size_t slot, const std::vector<std::size_t>& dims) {
    CMatrix out = CMatrix::identity(1);
    for (std::size_t k = 0; k < dims.size(); ++k) out = kron(out, k == slot ? op : CMatrix::identity(dims[k]));
    return out;
}

inline std::vector<std::size_t> factor_dims(const SpinSystem& sys) {
    std::vector<std::size_t> dims{3};
    for (const auto& s : sys.sites) dims.push_back(static_cast<std::size_t>(s.species.multiplicity()));
    return dims;
}

inline bool is_axial(const Vec3& b) { return b.x == 0.0 && b.y == 0.0; }

}  // namespace detail

/// In-plane unit vector from the vacancy to nitrogen site j (1-based);
/// sites sit at 120 degree spacing starting along +x.
inline Vec3 bond_direction(int site_index) {
    const double phi = 2.0 * std::numbers::pi * (site_index - 1) / 3.0;
    return {std::cos(phi), std::sin(phi), 0.0};
}

/// Diagonal axial model: D m_S^2 + gamma_e B_z m_S + m_S sum_j A_zz,j m_I,j.
/// Only the A_zz elements of the hyperfine tensors enter; strain, nuclear
/// Zeeman and quadrupole terms are dropped. Throws ModelError for a
/// non-axial field.
inline HermitianMatrix build_effective_hamiltonian(const SpinSystem& sys) {
    sys.validate();
    if (!detail::is_axial(sys.electron.b_field))
        throw ModelError("effective Hamiltonian requires an axial magnetic field (B_x = B_y = 0)");
    const auto basis = basis_states(sys);
    const double d = sys.electron.d_gs;
    const double zeeman = sys.electron.gamma_e * sys.electron.b_field.z;
    CMatrix h(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto& st = basis[i];
        double hf = 0.0;
        for (std::size_t j = 0; j < 3; ++j) hf += sys.sites[j].a_zz() * st.m_i[j].value();
        h(i, i) = d * st.m_s * st.m_s + zeeman * st.m_s + st.m_s * hf;
    }
    return HermitianMatrix(std::move(h));
}

/// Full ground-state Hamiltonian: ZFS (+strain), electron Zeeman, nuclear
/// Zeeman, full hyperfine tensor and quadrupole terms, gated by the flags of
/// `sys`.
inline HermitianMatrix build_full_hamiltonian(const SpinSystem& sys) {
    sys.validate();
    const auto dims = detail::factor_dims(sys);
    const auto se = spin_operators(HalfInt::from_int(1));
    const CMatrix sx = detail::embed(se.x, 0, dims);
    const CMatrix sy = detail::embed(se.y, 0, dims);
    const CMatrix sz = detail::embed(se.z, 0, dims);
    const std::array<const CMatrix*, 3> s_axes{&sx, &sy, &sz};

    const auto& el = sys.electron;
    const Vec3& b = el.b_field;

    CMatrix h = el.d_gs * (sz * sz);
    if (sys.include_strain) {
        h += el.e_x * (sy * sy - sx * sx);
        h += el.e_y * (sx * sy + sy * sx);
    }
    h += el.gamma_e * (b.x * sx + b.y * sy + b.z * sz);

    for (std::size_t j = 0; j < 3; ++j) {
        const auto& site = sys.sites[j];
        const auto ni = spin_operators(site.species.spin());
        const CMatrix ix = detail::embed(ni.x, j + 1, dims);
        const CMatrix iy = detail::embed(ni.y, j + 1, dims);
        const CMatrix iz = detail::embed(ni.z, j + 1, dims);
        const std::array<const CMatrix*, 3> i_axes{&ix, &iy, &iz};

        if (sys.include_nuclear_zeeman) {
            const double g = site.species.gamma_khz_per_mt() * 1e-3;  // MHz/mT
            h -= g * (b.x * ix + b.y * iy + b.z * iz);
        }

        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t c = 0; c < 3; ++c)
                if (site.hfi[a][c] != 0.0) h += site.hfi[a][c] * ((*s_axes[a]) * (*i_axes[c]));

        if (sys.include_quadrupole && !site.quadrupole.is_zero()) {
            const Vec3 p = bond_direction(site.site_index);
            const Vec3 o{p.y, -p.x, 0.0};  // p x z
            const CMatrix ip = p.x * ix + p.y * iy;
            const CMatrix io = o.x * ix + o.y * iy;
            h += site.quadrupole.p * (ip * ip);
            h += site.quadrupole.z * (iz * iz);
            h += site.quadrupole.o * (io * io);
        }
    }
    return HermitianMatrix(std::move(h));
}

struct Transition {
    int branch = -1;  // m_S = 0 <-> branch
    NuclearLabel nuclear;
    double frequency_mhz = 0.0;
    double dipole_weight = 1.0;
};

struct TransitionSet {
    std::vector<Transition> entries;

    std::vector<double> frequencies(int branch) const {
        std::vector<double> out;
        for (const auto& t : entries)
            if (t.branch == branch) out.push_back(t.frequency_mhz);
        return out;
    }
};

enum class TransitionMode { effective, full };

/// Overlap an eigenvector needs with one m_S manifold before it is labelled.
inline constexpr double kCharacterThreshold = 0.9;

/// Electron-spin transition frequencies m_S = 0 <-> +-1 for every nuclear
/// product state. Entries are ordered branch -1 then +1, nuclear states in
/// basis order, in both modes.
///
/// Full mode pairs eigenstates by their dominant m_S and nuclear-state
/// character and throws ModelError when some eigenstate has no m_S
/// character above kCharacterThreshold (close to a level anticrossing).
inline TransitionSet transition_frequencies(const SpinSystem& sys, TransitionMode mode) {
    const auto nuc = nuclear_states(sys);
    const std::size_t nn = nuc.size();
    TransitionSet out;

    if (mode == TransitionMode::effective) {
        sys.validate();
        if (!detail::is_axial(sys.electron.b_field))
            throw ModelError("effective transitions require an axial magnetic field");
        for (int branch : {-1, 1}) {
            const double f0 = sys.electron.d_gs + branch * sys.electron.gamma_e * sys.electron.b_field.z;
            for (const auto& label : nuc) {
                double hf = 0.0;
                for (std::size_t j = 0; j < 3; ++j) hf += sys.sites[j].a_zz() * label[j].value();
                out.entries.push_back({branch, label, f0 + branch * hf, 1.0});
            }
        }
        return out;
    }

    const HermitianMatrix h = build_full_hamiltonian(sys);
    const EigenDecomposition eig = eigen_hermitian(h);
    const std::size_t n = h.dim();

    struct Character {
        int m_s;
        std::size_t nuclear;
    };
    std::vector<Character> chars(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::array<double, 3> we{};  // m_S = +1, 0, -1
        std::vector<double> wn(nn, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double w = std::norm(eig.vectors(r, k));
            we[r / nn] += w;
            wn[r % nn] += w;
        }
        const auto best_e = static_cast<std::size_t>(std::max_element(we.begin(), we.end()) - we.begin());
        if (we[best_e] < kCharacterThreshold)
            throw ModelError("ambiguous m_S character (max overlap " + std::to_string(we[best_e]) +
                             "); field is too close to a level anticrossing");
        const auto best_n = static_cast<std::size_t>(std::max_element(wn.begin(), wn.end()) - wn.begin());
        chars[k] = {1 - static_cast<int>(best_e), best_n};
    }

    std::map<std::size_t, std::size_t> ground;  // nuclear label -> eigen index
    for (std::size_t k = 0; k < n; ++k)
        if (chars[k].m_s == 0 && !ground.emplace(chars[k].nuclear, k).second)
            throw ModelError("ambiguous nuclear character in the m_S = 0 manifold");

    const auto se = spin_operators(HalfInt::from_int(1));
    const auto dims = detail::factor_dims(sys);
    const CMatrix sx = detail::embed(se.x, 0, dims);
    const CMatrix sy = detail::embed(se.y, 0, dims);
    auto element = [&](const CMatrix& op, std::size_t e, std::size_t g) {
        cplx acc{};
        for (std::size_t i = 0; i < n; ++i) {
            const cplx ve = std::conj(eig.vectors(i, e));
            if (ve == cplx{}) continue;
            for (std::size_t j = 0; j < n; ++j) acc += ve * op(i, j) * eig.vectors(j, g);
        }
        return acc;
    };

    std::vector<std::pair<std::size_t, Transition>> found;
    for (std::size_t k = 0; k < n; ++k) {
        if (chars[k].m_s == 0) continue;
        const auto it = ground.find(chars[k].nuclear);
        if (it == ground.end()) throw ModelError("no m_S = 0 partner for an excited eigenstate");
        const std::size_t g = it->second;
        Transition t;
        t.branch = chars[k].m_s;
        t.nuclear = nuc[chars[k].nuclear];
        t.frequency_mhz = eig.values[k] - eig.values[g];
        t.dipole_weight = std::norm(element(sx, k, g)) + std::norm(element(sy, k, g));
        const std::size_t key = (t.branch == -1 ? 0 : nn) + chars[k].nuclear;
        found.emplace_back(key, t);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < found.size(); ++i)
        if (found[i].first == found[i - 1].first) throw ModelError("two eigenstates share one transition label");
    for (auto& f : found) out.entries.push_back(f.second);
    return out;
}

/// Point-dipole estimate of A_zz for a nucleus in the plane of the vacancy
/// (e_r . e_z = 0): -(mu0/4pi) h gamma_e gamma_n / r^3, in MHz.
inline double dipolar_azz(double distance_nm, double gamma_n_khz_per_mt,
                          double gamma_e_mhz_per_mt = constants::gamma_e_mhz_per_mt) {
    if (!(distance_nm > 0.0)) throw std::invalid_argument("distance must be positive");
    const double ge = gamma_e_mhz_per_mt * 1e9;  // Hz/T
    const double gn = gamma_n_khz_per_mt * 1e6;  // Hz/T
    const double r = distance_nm * 1e-9;
    const double hz = -constants::mu0_over_4pi * constants::planck_h * ge * gn / (r * r * r);
    return hz * 1e-6;
}

}  // namespace vbodmr
