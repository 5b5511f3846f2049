# Trailer Planner Package
