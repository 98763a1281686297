/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include "gmmuda/error.hpp"

namespace gmmuda {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoInitializedMode: return "NoInitializedMode";
    case ErrorCode::AlreadyFrozen: return "AlreadyFrozen";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::Uncalibrated: return "Uncalibrated";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace gmmuda
