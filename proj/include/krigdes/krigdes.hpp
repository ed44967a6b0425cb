#pragma once

#include "krigdes/error.hpp"
#include "krigdes/design_space.hpp"
#include "krigdes/covariance.hpp"
#include "krigdes/linalg.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/criteria.hpp"
#include "krigdes/incremental.hpp"
#include "krigdes/search.hpp"
#include "krigdes/study.hpp"
#include "krigdes/validate.hpp"
#include "krigdes/version.hpp"
