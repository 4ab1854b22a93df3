#pragma once

#include "mlve/assembler.hpp"
#include "mlve/errors.hpp"
#include "mlve/forests.hpp"
#include "mlve/grassmann.hpp"
#include "mlve/model.hpp"
#include "mlve/oracle.hpp"
#include "mlve/parallel.hpp"
#include "mlve/partitions.hpp"
#include "mlve/quadrature.hpp"
#include "mlve/replica.hpp"
#include "mlve/series.hpp"
#include "mlve/taylor.hpp"
