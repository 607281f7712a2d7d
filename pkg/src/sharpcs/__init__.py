"""Sharp asymptotic time-uniform confidence sequences for a location parameter."""
