#pragma once

#include <stdexcept>
#include <string>

namespace aoalab {

// Three failure families, mirrored by the CLI's exit codes: invalid input or
// configuration (2), file I/O and format problems (3), numerical breakdown (4).

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct InvalidArgument : ConfigError {
    using ConfigError::ConfigError;
};

struct InsufficientSamples : ConfigError {
    using ConfigError::ConfigError;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : IoError {
    using IoError::IoError;
};

struct NumericError : Error {
    using Error::Error;
};

struct NoConvergence : NumericError {
    using NumericError::NumericError;
};

struct SingularMatrix : NumericError {
    using NumericError::NumericError;
};

// Linear-algebra preconditions.
struct NonSquare : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct NotHermitian : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct EmptySnapshotBlock : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct RankDeficient : NumericError {
    using NumericError::NumericError;
};

// Neural-kernel preconditions.
struct DimensionMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct ShapeMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct StaleCache : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct LabelOutOfRange : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// channel / array-model errors
struct AzimuthOutOfRange : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct InvalidSpec : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// angle-estimator errors
struct TooManySources : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct DegenerateCovariance : NumericError {
    using NumericError::NumericError;
};

// dataset / training errors
struct DegenerateDataset : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct MissingRegion : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct FoldTooSmall : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct TooFewSamples : InsufficientSamples {
    using InsufficientSamples::InsufficientSamples;
};

// persistence errors
struct KindMismatch : FormatError {
    using FormatError::FormatError;
};

// streaming errors
struct InvalidDelta : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct EmptyStream : InsufficientSamples {
    using InsufficientSamples::InsufficientSamples;
};

struct TooShort : InsufficientSamples {
    using InsufficientSamples::InsufficientSamples;
};

// episodic-learning errors
struct IndexMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// class-space errors (generative augmentation and replay)
struct TooManyClasses : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct UnknownClass : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct UncoveredClass : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct ClassSpaceMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// report collation: a run directory with nothing to summarize
struct MissingArtifacts : IoError {
    using IoError::IoError;
};

}  // namespace aoalab
