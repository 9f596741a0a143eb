#pragma once

#include <stdexcept>
#include <string>

namespace flagflow {

struct SingularMatrix : std::runtime_error { using std::runtime_error::runtime_error; };
struct NotHermitian : std::runtime_error { using std::runtime_error::runtime_error; };
struct DimensionMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidDimension : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidStep : std::runtime_error { using std::runtime_error::runtime_error; };
struct OutsideChart : std::runtime_error { using std::runtime_error::runtime_error; };
struct ChartMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct StepTooLarge : std::runtime_error { using std::runtime_error::runtime_error; };
struct SingularBlock : std::runtime_error { using std::runtime_error::runtime_error; };
struct BoundaryContact : std::runtime_error { using std::runtime_error::runtime_error; };
struct IrreparableState : std::runtime_error { using std::runtime_error::runtime_error; };
struct DegenerateStep : std::runtime_error { using std::runtime_error::runtime_error; };
struct LengthMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct NoConvergence : std::runtime_error { using std::runtime_error::runtime_error; };
struct Unsupported : std::runtime_error { using std::runtime_error::runtime_error; };
struct ConfigInvalid : std::runtime_error { using std::runtime_error::runtime_error; };
struct RuntimeFailure : std::runtime_error { using std::runtime_error::runtime_error; };

} // namespace flagflow
