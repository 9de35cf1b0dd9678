use std::path::Path;

const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
const NOVELTY: &str = include_str!("../../assets/prompts/novelty.txt");
const TRAITS: &str = include_str!("../../assets/prompts/traits.txt");

/// Prompt text assets. The bundled defaults can be replaced by a directory
/// holding `system.txt`, `novelty.txt` and `traits.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub system: String,
    /// Appended to the system prompt when the agent sees its full session.
    pub novelty: String,
    /// Trait generation template with `{system_prompt}` and `{batch}` slots.
    pub traits: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts {
            system: SYSTEM.trim().to_string(),
            novelty: NOVELTY.trim().to_string(),
            traits: TRAITS.trim().to_string(),
        }
    }
}

impl Prompts {
    /// Files missing from `dir` keep their bundled text.
    pub fn load_dir(dir: &Path) -> std::io::Result<Prompts> {
        let mut p = Prompts::default();
        for (name, slot) in [
            ("system.txt", &mut p.system),
            ("novelty.txt", &mut p.novelty),
            ("traits.txt", &mut p.traits),
        ] {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(text) => *slot = text.trim().to_string(),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(p)
    }

    /// The system prompt for one session.
    pub fn system_for(&self, personality: Option<&str>, novelty: bool) -> String {
        let mut text = String::new();
        if let Some(t) = personality {
            text.push_str("Your personality: ");
            text.push_str(t.trim());
            text.push_str("\n\n");
        }
        text.push_str(&self.system);
        if novelty {
            text.push_str("\n\n");
            text.push_str(&self.novelty);
        }
        text
    }

    pub fn traits_prompt(&self, batch: usize) -> String {
        self.traits
            .replace("{system_prompt}", &self.system)
            .replace("{batch}", &batch.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn personality_is_prepended() {
        let p = Prompts::default();
        let s = p.system_for(Some("Loves spirals."), false);
        assert!(s.starts_with("Your personality: Loves spirals."));
        assert!(s.ends_with(&p.system));
        assert_eq!(p.system_for(None, false), p.system);
        assert!(p.system_for(None, true).ends_with(&p.novelty));
    }

    #[test]
    fn traits_template_is_filled() {
        let t = Prompts::default().traits_prompt(50);
        assert!(t.contains("Write 50 new"));
        assert!(!t.contains("{system_prompt}"));
    }
}
