#pragma once

#include "fesid/beliefs.hpp"
#include "fesid/dataio.hpp"
#include "fesid/duffing.hpp"
#include "fesid/engine.hpp"
#include "fesid/error.hpp"
#include "fesid/nlarx.hpp"
