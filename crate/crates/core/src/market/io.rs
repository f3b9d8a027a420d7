use super::{matrix_from_rows, matrix_to_rows, BidOrder, MarketInstance};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Read;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketFormat {
    Json,
}

/// On-disk order book.
///
/// ```json
/// {"n": 3, "theta": [[..]], "orders": [{"id": "a", "pairs": [[0, 1]],
///   "limit_price": 0.4, "limit_quantity": 2}]}
/// ```
/// `theta` is optional; `pairs` lists the `(candidate, position)` entries
/// set to one in the bid matrix, 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderBookDocument {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub orders: Vec<OrderDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderDocument {
    pub id: String,
    pub pairs: Vec<[usize; 2]>,
    pub limit_price: f64,
    pub limit_quantity: f64,
}

impl OrderBookDocument {
    pub fn into_instance(self) -> Result<MarketInstance> {
        let n = self.n;
        let theta = match self.theta {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: rows.len(),
                    });
                }
                Some(matrix_from_rows(&rows)?)
            }
            None => None,
        };
        let orders = self
            .orders
            .into_iter()
            .map(|o| {
                let pairs: Vec<(usize, usize)> = o.pairs.iter().map(|p| (p[0], p[1])).collect();
                BidOrder::from_pairs(o.id, n, &pairs, o.limit_price, o.limit_quantity)
            })
            .collect::<Result<Vec<_>>>()?;
        MarketInstance::new(n, orders, theta)
    }

    pub fn from_instance(instance: &MarketInstance) -> Self {
        Self {
            n: instance.n(),
            theta: Some(matrix_to_rows(instance.theta())),
            orders: instance
                .orders()
                .iter()
                .map(|o| OrderDocument {
                    id: o.id().to_string(),
                    pairs: o.pairs().into_iter().map(|(i, j)| [i, j]).collect(),
                    limit_price: o.limit_price(),
                    limit_quantity: o.limit_quantity(),
                })
                .collect(),
        }
    }
}

/// Reads and validates an order book.
pub fn load_market(source: impl Read, format: MarketFormat) -> Result<MarketInstance> {
    match format {
        MarketFormat::Json => {
            let doc: OrderBookDocument =
                serde_json::from_reader(source).map_err(|e| Error::Malformed(e.to_string()))?;
            doc.into_instance()
        }
    }
}
