"""
Mobility Response

Measures how place-based community activity tracked government response
stringency during the early COVID-19 period, and relates those responses
to geography and country attributes.
"""

__version__ = "1.0.0"
