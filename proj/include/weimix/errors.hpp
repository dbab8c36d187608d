#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace weimix {

// Bad user-supplied configuration (flags, config file, schema reference).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or contract-violating input data (CSV, schema, dataset).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A metric whose value is undefined for the given inputs (e.g. a concordance
// index with zero comparable pairs). Deliberately not a silent sentinel.
class UndefinedMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Batch statistics need at least two rows.
class BatchTooSmallError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or activations during training. Carries the epoch at which
// training aborted and the network block that produced the bad values.
class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(const std::string& what, std::size_t epoch_index,
                          std::string block_name)
        : std::runtime_error(what), epoch(epoch_index), block(std::move(block_name)) {}

    std::size_t epoch = 0;
    std::string block;
};

}  // namespace weimix
