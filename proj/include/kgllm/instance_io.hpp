#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgllm/provenance.hpp"
#include "kgllm/sampler.hpp"

namespace kgllm {

class RecordError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One instance per line:
/// {"id":..,"nodes":[..],"relations":[..],"hops":..,"label":..,"gold_relation":..,"split":..}
/// gold_relation is omitted for negatives. An optional provenance header
/// line precedes the records.
std::string instance_to_json(const PathInstance& inst);
PathInstance instance_from_json(std::string_view line);

void write_instances(std::ostream& out, std::span<const PathInstance> instances,
                     const Provenance* provenance = nullptr);
std::vector<PathInstance> read_instances(std::istream& in, Provenance* provenance = nullptr);

}  // namespace kgllm
