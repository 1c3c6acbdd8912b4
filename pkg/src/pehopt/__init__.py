"""Design optimisation of bimorph piezoelectric energy harvesters on bridges."""

__version__ = "0.1.0"
