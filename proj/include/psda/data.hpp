#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psda/matrix.hpp"

namespace psda {

enum class DomainTag { kSource, kTarget };

std::string to_string(DomainTag tag);

// Samples with optional class labels in [0, num_classes).
struct Dataset {
    Matrix samples;
    std::optional<std::vector<std::size_t>> labels;
    DomainTag domain = DomainTag::kSource;
    std::size_t num_classes = 2;

    std::size_t size() const { return samples.rows(); }
    std::size_t dim() const { return samples.cols(); }
    bool labeled() const { return labels.has_value(); }

    // Throws DataError if labels are missing, mis-sized, or out of range.
    void validate() const;
};

// The adaptation-facing view of a target domain. It has no label field, so
// nothing that takes an UnlabeledDataset can read target labels.
class UnlabeledDataset {
public:
    UnlabeledDataset() = default;
    explicit UnlabeledDataset(Matrix samples) : samples_(std::move(samples)) {}

    const Matrix& samples() const { return samples_; }
    std::size_t size() const { return samples_.rows(); }
    std::size_t dim() const { return samples_.cols(); }

private:
    Matrix samples_;
};

UnlabeledDataset strip_labels(const Dataset& d);

// Synthetic domain shift: the target is the source rotated by `rotation`
// radians about the generator's center and then translated.
struct ShiftSpec {
    double rotation = 0.0;
    std::vector<double> translation = {0.0, 0.0};
    double noise = 0.12;
    std::size_t num_classes = 2;
    std::vector<std::size_t> class_sizes;  // blobs only

    void validate() const;
};

struct DomainPair {
    Dataset source;
    Dataset target;  // labels retained for evaluation only
};

// Center that two-moons rotations are taken about.
inline constexpr double kMoonsCenterX = 0.5;
inline constexpr double kMoonsCenterY = 0.25;

// Two interleaved half circles (class 0 outer, class 1 inner) with Gaussian
// noise; n points per domain. The target is the same draw after the shift.
DomainPair gen_two_moons(std::size_t n, const ShiftSpec& spec, std::uint64_t seed);

// K isotropic Gaussians (std = spec.noise) with centers on a circle of
// radius `radius`; target = the same draw rotated about the origin and
// translated. Throws ConfigError on an empty class.
DomainPair gen_gaussian_blobs(std::span<const std::size_t> per_class_n, const ShiftSpec& spec,
                              std::uint64_t seed, double radius = 4.0);

// CSV interchange: header f0,...,f{d-1}[,label], one sample per line, floats
// with 17 significant digits, LF line endings.
void save_dataset(const std::string& path, const Dataset& d);
std::string format_dataset(const Dataset& d);

// Throws DataError naming the line on malformed input. Labels must lie in
// [0, num_classes).
Dataset load_dataset(const std::string& path, std::size_t num_classes,
                     DomainTag domain = DomainTag::kSource);
Dataset parse_dataset(const std::string& text, std::size_t num_classes,
                      DomainTag domain = DomainTag::kSource);

// "%.17g" rendering shared by every CSV writer.
std::string format_double(double v);

}  // namespace psda
