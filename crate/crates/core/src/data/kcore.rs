use std::collections::HashMap;

use super::Interaction;
use crate::{Error, Result};

/// Keeps the maximal subset in which every user and every item has at least
/// `k` interactions. Input order is preserved.
pub fn k_core_filter(interactions: &[Interaction], k: usize) -> Result<Vec<Interaction>> {
    if k == 0 {
        return Err(Error::Config("k-core requires k >= 1".into()));
    }
    let mut alive = vec![true; interactions.len()];
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for (x, _) in interactions.iter().zip(&alive).filter(|(_, &a)| a) {
            *users.entry(&x.user_id).or_default() += 1;
            *items.entry(&x.item_id).or_default() += 1;
        }
        let mut removed = false;
        for (x, a) in interactions.iter().zip(alive.iter_mut()) {
            if *a && (users[x.user_id.as_str()] < k || items[x.item_id.as_str()] < k) {
                *a = false;
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }
    Ok(interactions
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(x, _)| x.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ix(u: &str, i: &str) -> Interaction {
        Interaction {
            user_id: u.into(),
            item_id: i.into(),
            rating: 3.0,
            review_text: String::new(),
            timestamp: 0,
        }
    }

    #[test]
    fn already_a_core_is_unchanged() {
        let data: Vec<_> = ["a", "b"]
            .iter()
            .flat_map(|u| ["x", "y"].iter().map(move |i| ix(u, i)))
            .collect();
        assert_eq!(k_core_filter(&data, 2).unwrap(), data);
    }

    #[test]
    fn lone_user_vanishes() {
        assert!(k_core_filter(&[ix("u", "i")], 5).unwrap().is_empty());
    }

    #[test]
    fn removal_cascades() {
        // c's only item z is shared with nobody else; dropping c drops z,
        // and nothing else depends on them.
        let mut data = vec![ix("a", "x"), ix("a", "y"), ix("b", "x"), ix("b", "y")];
        data.push(ix("c", "z"));
        data.push(ix("c", "x"));
        let out = k_core_filter(&data, 2).unwrap();
        // c has 2 but z has 1 -> (c,z) removed -> c has 1 -> (c,x) removed.
        assert_eq!(out, data[..4].to_vec());
    }

    #[test]
    fn zero_k_rejected() {
        assert!(k_core_filter(&[], 0).is_err());
    }
}
