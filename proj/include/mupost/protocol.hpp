#ifndef MUPOST_PROTOCOL_HPP
#define MUPOST_PROTOCOL_HPP

#include <array>
#include <string>
#include <vector>

namespace mupost {

/// One diffusion-weighted measurement. Internal units: b-value in
/// ms/um^2, times in ms; the on-disk format carries b in s/mm^2 and is
/// converted on load. With diffusivities in um^2/ms every exponent b*D
/// is dimensionless.
struct GradientEntry {
    double bvalue = 0.0;               // ms/um^2
    std::array<double, 3> direction{}; // unit vector, may be zero when b = 0
    double delta_small = 0.0;          // gradient duration, ms
    double delta_big = 0.0;            // gradient separation, ms
};

/// A shell groups entries sharing a nominal b-value (rounded to 1 s/mm^2).
struct Shell {
    double bvalue = 0.0; // ms/um^2 (nominal)
    std::vector<std::size_t> entries;
};

/// Measurement protocol: ordered gradient table plus the derived shell
/// partition. Immutable after construction; safe to share across threads.
class AcquisitionProtocol {
public:
    AcquisitionProtocol() = default;
    explicit AcquisitionProtocol(std::vector<GradientEntry> entries);

    std::size_t size() const { return entries_.size(); }
    const std::vector<GradientEntry>& entries() const { return entries_; }
    const GradientEntry& entry(std::size_t i) const { return entries_[i]; }

    /// Indices of b=0 entries (b < 50 s/mm^2 counts as b0).
    const std::vector<std::size_t>& b0_entries() const { return b0_; }
    /// Non-zero shells in ascending b-value order.
    const std::vector<Shell>& shells() const { return shells_; }

    /// Subset keeping b0 entries and shells with b <= bmax_s_mm2.
    /// kept_indices receives the surviving entry indices in order.
    AcquisitionProtocol shell_mask(double bmax_s_mm2,
                                   std::vector<std::size_t>* kept_indices = nullptr) const;

private:
    void build_shells();
    void validate() const;

    std::vector<GradientEntry> entries_;
    std::vector<std::size_t> b0_;
    std::vector<Shell> shells_;
};

/// Parse a protocol file: whitespace-delimited columns
///   bvalue_s_mm2 gx gy gz delta_ms Delta_ms
/// with '#' comments and blank lines allowed.
AcquisitionProtocol load_protocol(const std::string& path);
void save_protocol(const AcquisitionProtocol& protocol, const std::string& path);

/// Per-shell means of a signal vector: element 0 is the b0 mean (or the
/// plain value 1.0-weighted mean of b0 entries), followed by one mean per
/// non-zero shell in ascending b-value order. Throws when the signal
/// length does not match the protocol.
std::vector<double> direction_average(const std::vector<double>& signal,
                                      const AcquisitionProtocol& protocol);

/// Same, but skipping the b0 slot; used as the manually defined summary
/// statistic vector (one mean per diffusion-weighted shell).
std::vector<double> shell_means(const std::vector<double>& signal,
                                const AcquisitionProtocol& protocol);

} // namespace mupost

#endif
