use super::model::Role;

/// Every session-gated operation of the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operation {
    DeployContract,
    RegisterUniversity,
    AddStudent,
    AuthenticateCertificate,
    RevokeCertificate,
    ViewRecord,
    SearchStudents,
    ReadOutbox,
    Faucet,
    Logout,
    Verify,
}

impl Operation {
    pub const ALL: [Operation; 11] = [
        Operation::DeployContract,
        Operation::RegisterUniversity,
        Operation::AddStudent,
        Operation::AuthenticateCertificate,
        Operation::RevokeCertificate,
        Operation::ViewRecord,
        Operation::SearchStudents,
        Operation::ReadOutbox,
        Operation::Faucet,
        Operation::Logout,
        Operation::Verify,
    ];
}

/// The role matrix. `None` is an anonymous caller.
pub fn is_allowed(role: Option<Role>, op: Operation) -> bool {
    use Operation::*;
    match (op, role) {
        (Verify, _) => true,
        (_, None) => false,
        (Logout, Some(_)) => true,
        (DeployContract | RegisterUniversity | ReadOutbox | Faucet, Some(role)) => {
            role == Role::Admin
        }
        (AddStudent | AuthenticateCertificate | RevokeCertificate, Some(role)) => {
            role == Role::University
        }
        (ViewRecord, Some(role)) => role != Role::Admin,
        (SearchStudents, Some(role)) => role == Role::Employer,
    }
}
