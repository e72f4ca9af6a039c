#ifndef IM2CANCEL_IM2CANCEL_HPP
#define IM2CANCEL_IM2CANCEL_HPP

#include "errors.hpp"
#include "dsp.hpp"
#include "txgen.hpp"
#include "frontend.hpp"
#include "canceller.hpp"
#include "metrics.hpp"
#include "config.hpp"
#include "recording.hpp"
#include "scenario.hpp"

#endif
