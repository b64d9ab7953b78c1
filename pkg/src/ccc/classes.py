"""Canonical class vocabularies for the four building indicators."""

ROOF_CLASSES = ("Iron Sheets", "Tiles", "Concrete", "Grass")

WALL_CLASSES = (
    "Wood with mud",
    "Sun-dried bricks",
    "Cement blocks",
    "Burnt bricks",
    "Stone",
    "Concrete",
    "Timber",
    "Others",
)

HEIGHT_CLASSES = ("H:1", "H:2", "H:3", "HBET:3-6", "HBET:4-7", "HBET:8+")

MACRO_CLASSES = (
    "CR/LFINF",
    "CR/LWAL",
    "MATO",
    "MCF+CB/LWAL",
    "MCF+CL/LWAL",
    "MUR+ADO+MOC/LWAL",
    "MUR+ADO/LWAL",
    "MUR+CB/LWAL",
    "MUR+CL+MOC/LWAL",
    "MUR+CL/LWAL",
    "MUR+STDRE+MOC/LWAL",
    "MUR+STDRE/LWAL",
    "MUR+STRUB+MOC/LWAL",
    "MUR+STRUB/LWAL",
    "W+WWD/LWAL",
    "W/LWAL",
)

# Indicators that own a latent channel, in channel order.
LATENT_INDICATORS = ("roof", "wall", "height")
INDICATORS = ("roof", "wall", "height", "macro")

CLASSES = {
    "roof": ROOF_CLASSES,
    "wall": WALL_CLASSES,
    "height": HEIGHT_CLASSES,
    "macro": MACRO_CLASSES,
}

SETTLEMENT_TYPES = ("urban", "rural")
