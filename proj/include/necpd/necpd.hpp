#ifndef NECPD_NECPD_HPP
#define NECPD_NECPD_HPP

#include "necpd/anomaly.hpp"
#include "necpd/diagnostics.hpp"
#include "necpd/error.hpp"
#include "necpd/features.hpp"
#include "necpd/io.hpp"
#include "necpd/pipeline.hpp"
#include "necpd/random.hpp"
#include "necpd/solvers.hpp"
#include "necpd/tensor.hpp"
#include "necpd/trace.hpp"

#endif  // NECPD_NECPD_HPP
