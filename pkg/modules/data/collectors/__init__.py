# Scene -> training sample collection
