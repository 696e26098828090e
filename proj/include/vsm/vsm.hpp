#pragma once

#include "vsm/basis.hpp"
#include "vsm/common.hpp"
#include "vsm/covest.hpp"
#include "vsm/crossval.hpp"
#include "vsm/diagnostics.hpp"
#include "vsm/fpca.hpp"
#include "vsm/linalg.hpp"
#include "vsm/models.hpp"
#include "vsm/simlab.hpp"
#include "vsm/smoothcore.hpp"
#include "vsm/tensorfit.hpp"
#include "vsm/twostep.hpp"
