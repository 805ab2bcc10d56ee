"""Per-trade transaction costs: a flat administration fee fixed in
reference-month dollars plus half of a proportional bid-ask spread."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Optional

from .market_data import CpiSeries, Month, SecurityId, deflate


@dataclass(frozen=True)
class FeeModel:
    admin_fee_2016: float = 1.00
    spread_fraction: float = 0.001
    reference_month: Month = (2016, 12)

    def __post_init__(self):
        if self.admin_fee_2016 < 0:
            raise ValueError(f"admin fee must be >= 0, got {self.admin_fee_2016}")
        if not 0 <= self.spread_fraction < 1:
            raise ValueError(f"spread fraction must be in [0, 1), got {self.spread_fraction}")

    @classmethod
    def zero(cls) -> "FeeModel":
        return cls(admin_fee_2016=0.0, spread_fraction=0.0)

    @property
    def is_free(self) -> bool:
        return self.admin_fee_2016 == 0 and self.spread_fraction == 0


@dataclass(frozen=True)
class FeeLedgerEntry:
    date: date
    security: SecurityId
    shares_traded: float  # signed; negative is a sale
    price: float
    admin_component: float
    spread_component: float

    @property
    def total(self) -> float:
        return self.admin_component + self.spread_component


def trade_fee(
    model: FeeModel,
    shares: float,
    price: float,
    trade_month: Month,
    cpi: Optional[CpiSeries],
) -> tuple[float, float]:
    """Return ``(admin, spread)`` for trading ``shares`` at ``price``.

    Buys and sells cost the same. The admin fee is converted from the model's
    reference month into ``trade_month`` dollars, so ``cpi`` may only be
    omitted when the admin fee is zero.
    """
    if shares < 0:
        raise ValueError(f"shares must be non-negative, got {shares}")
    if price <= 0:
        raise ValueError(f"price must be positive, got {price}")
    if shares == 0:
        return 0.0, 0.0
    if model.admin_fee_2016 == 0:
        admin = 0.0
    else:
        if cpi is None:
            raise ValueError("a CPI series is required to price a non-zero admin fee")
        admin = deflate(model.admin_fee_2016, model.reference_month, trade_month, cpi)
    spread = shares * price * model.spread_fraction / 2
    return admin, spread
