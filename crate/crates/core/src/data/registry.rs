//! Static metadata for the standard evaluation datasets, so the CLI can
//! report expected shapes when a user points it at a real file.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetInfo {
    pub name: &'static str,
    /// None for datasets without class labels (recommendation data).
    pub classes: Option<u32>,
    pub samples: u64,
    pub features: u64,
}

const REGISTRY: &[DatasetInfo] = &[
    DatasetInfo {
        name: "a9a",
        classes: Some(2),
        samples: 32_561,
        features: 123,
    },
    DatasetInfo {
        name: "satimage",
        classes: Some(6),
        samples: 4_435,
        features: 36,
    },
    DatasetInfo {
        name: "covtype",
        classes: Some(2),
        samples: 581_012,
        features: 54,
    },
    DatasetInfo {
        name: "protein",
        classes: Some(3),
        samples: 14_895,
        features: 357,
    },
    DatasetInfo {
        name: "ijcnn1",
        classes: Some(2),
        samples: 49_990,
        features: 22,
    },
    DatasetInfo {
        name: "epsilon",
        classes: Some(2),
        samples: 40_000,
        features: 2_000,
    },
    DatasetInfo {
        name: "YaleB",
        classes: Some(38),
        samples: 2_414,
        features: 2_016,
    },
    DatasetInfo {
        name: "AR",
        classes: Some(100),
        samples: 2_600,
        features: 1_200,
    },
    DatasetInfo {
        name: "PIE",
        classes: Some(64),
        samples: 11_554,
        features: 1_024,
    },
    DatasetInfo {
        name: "MovieLens-1M",
        classes: None,
        samples: 6_040,
        features: 3_706,
    },
];

pub fn dataset_registry() -> &'static [DatasetInfo] {
    REGISTRY
}

/// Case-insensitive lookup by dataset name.
pub fn lookup_dataset(name: &str) -> Option<&'static DatasetInfo> {
    REGISTRY
        .iter()
        .find(|info| info.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_entries() {
        assert_eq!(dataset_registry().len(), 10);
        let a9a = lookup_dataset("a9a").unwrap();
        assert_eq!(
            (a9a.classes, a9a.samples, a9a.features),
            (Some(2), 32_561, 123)
        );
        let eps = lookup_dataset("EPSILON").unwrap();
        assert_eq!(
            (eps.classes, eps.samples, eps.features),
            (Some(2), 40_000, 2_000)
        );
        let ml = lookup_dataset("movielens-1m").unwrap();
        assert_eq!((ml.classes, ml.samples, ml.features), (None, 6_040, 3_706));
        assert!(lookup_dataset("cifar").is_none());
    }
}
