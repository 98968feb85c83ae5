#pragma once

#include <string>
#include <vector>

#include "gdip/gradcheck.hpp"

namespace gdip {

// Named finite-difference verification covering every differentiable piece.
// Scopes: ops | gdip | encoder | mgdip | losses | all.
struct SuiteEntry {
    std::string name;
    GradCheckReport report;
};

std::vector<std::string> gradcheck_scopes();
std::vector<SuiteEntry> run_gradcheck_suite(const std::string& scope);
bool suite_passed(const std::vector<SuiteEntry>& entries);

}  // namespace gdip
