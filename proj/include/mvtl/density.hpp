#pragma once

#include <mvtl/density/density.hpp>
#include <mvtl/density/flow.hpp>
#include <mvtl/density/kde.hpp>
