"""Normal-form and KAM iteration engine for reversible wave-type fields."""

__version__ = "0.1.0"
